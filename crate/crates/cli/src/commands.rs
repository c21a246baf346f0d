//! One function per subcommand.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use fudnn::connectivity::{
    connectivity_matrix, minmax_normalize, row_reduce, threshold_edges, weights_to_json, write_edges_csv, PlvOptions,
};
use fudnn::dsp::{dataset_windows, ersp, preprocess_dataset, psd_welch, ErspConfig, PreprocessConfig};
use fudnn::eeg::{epoch, load_any, save_eegc, ChannelMatrix, ClassSet, Dataset, EegcFile, Montage};
use fudnn::experiment::{
    predict_windows, run_ablation, run_holdout, run_loso, score, Evaluation, Prediction, ResultRow,
    Summary,
};
use fudnn::nn::gradcheck::downscaled_spec;
use fudnn::nn::{grad_check_network, load_checkpoint, save_checkpoint, Architecture, NetworkSpec};
use fudnn::synth::{generate, SynthSpec};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_band, read_json, ExperimentArgs};
use crate::error::{CliError, CliResult};
use crate::output::OutDir;

/// Largest relative gradient error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "fudnn", version, about = "Connectivity-weighted CNN-BiLSTM decoding of visual imagery EEG")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FUDNN_THREADS")]
    pub threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic subjects from a JSON spec.
    Synth(SynthArgs),
    /// Resample, band-pass and window trial data.
    Preprocess(PreprocessArgs),
    /// Phase-locking connectivity, channel weights and thresholded edges.
    Plv(PlvArgs),
    /// Train one network on an 80/20 trial split and save a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Cross-validate all four layer-stack variants on identical folds.
    Ablation(AblationArgs),
    /// Leave-one-subject-out transfer.
    Loso(LosoArgs),
    /// Power spectra or event-related spectral perturbation as plot-ready CSV.
    Analyze(AnalyzeArgs),
    /// Compare analytic and numeric gradients of a small network.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (JSON); defaults apply to missing fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Recording or trial dataset files (EEGC).
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_band, default_value = "0.5:13")]
    pub band: [f64; 2],
    /// Target sampling rate in Hz.
    #[arg(long, default_value_t = 250.0)]
    pub rate: f64,
    /// Window length in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub window: f64,
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    /// Band-pass FIR order.
    #[arg(long, default_value_t = 30)]
    pub order: usize,
    /// Trial start relative to each marker, for recordings.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub epoch_offset: f64,
    /// Trial length in seconds, for recordings.
    #[arg(long, default_value_t = 5.0)]
    pub epoch_length: f64,
}

#[derive(Debug, Args)]
pub struct PlvArgs {
    /// Trial dataset or window set (EEGC).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Re-filter into this sub-band before extracting phases.
    #[arg(long, value_parser = parse_band)]
    pub band: Option<[f64; 2]>,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Preprocessed trial dataset (EEGC).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Preprocessed trial dataset (EEGC).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
pub struct LosoArgs {
    /// Directory of preprocessed per-subject trial datasets (`*.eegc`).
    #[arg(long)]
    pub dir: PathBuf,
    /// Held-out subject; repeat for several, or `all`.
    #[arg(long, required = true)]
    pub target: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("analysis").required(true).args(["psd", "ersp"])))]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Welch power spectral density per class and channel.
    #[arg(long)]
    pub psd: bool,
    /// Event-related spectral perturbation per class for one channel.
    #[arg(long)]
    pub ersp: bool,
    /// Channel labels to include (PSD) or the single channel (ERSP, default Oz).
    #[arg(long, value_delimiter = ',')]
    pub channels: Vec<String>,
    /// Welch segment length in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub segment: f64,
    /// ERSP baseline interval relative to onset (default: first 0.5 s of the trial).
    #[arg(long, value_parser = parse_band, allow_hyphen_values = true)]
    pub baseline: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_band, default_value = "0.5:50")]
    pub freqs: [f64; 2],
    #[arg(long, default_value_t = 400)]
    pub times: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Network spec (JSON) to check instead of the built-in small one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Only this variant (default: all four).
    #[arg(long)]
    pub variant: Option<Architecture>,
    #[arg(long, default_value_t = 31)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Optional directory for a CSV report and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs the parsed command.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Plv(a) => plv(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablation(a) => ablation(a),
        Command::Loso(a) => loso(a),
        Command::Analyze(a) => analyze(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    match load_any(path)? {
        EegcFile::Dataset(d) => Ok(d),
        EegcFile::Recording(_) => Err(fudnn::Error::Format(format!(
            "{} is a continuous recording; run `preprocess` first",
            path.display()
        ))
        .into()),
        EegcFile::Windows(_) => {
            Err(fudnn::Error::Format(format!("{} holds windows, not whole trials", path.display())).into())
        }
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

fn seeds(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn config_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("configs serialize")
}

fn synth(args: SynthArgs) -> CliResult<()> {
    let mut value = config_value(&SynthSpec::default());
    let mut out = OutDir::create(&args.out)?;
    if let Some(path) = &args.spec {
        crate::config::merge(&mut value, read_json(path)?);
        out.add_input(path)?;
    }
    let mut spec: SynthSpec =
        serde_json::from_value(value).map_err(|e| fudnn::Error::Config(format!("synthetic spec: {e}")))?;
    if let Some(n) = args.subjects {
        spec.n_subjects = n;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let datasets = generate(&spec)?;
    for d in &datasets {
        let name = format!("{}.eegc", d.subject_id);
        save_eegc(d, out.record(&name)?)?;
        info!("wrote {name}: {} trials", d.len());
    }
    out.write_json("spec.json", &spec)?;
    out.finish("synth", config_value(&spec), seeds(&[("synth", spec.seed)]))?;
    Ok(())
}

fn preprocess(args: PreprocessArgs) -> CliResult<()> {
    let config = PreprocessConfig {
        target_rate_hz: args.rate,
        band_hz: args.band,
        order: args.order,
        window_s: args.window,
        overlap: args.overlap,
    };
    let mut out = OutDir::create(&args.out)?;
    let mut counts = Vec::new();
    for path in &args.input {
        out.add_input(path)?;
        let dataset = match load_any(path)? {
            EegcFile::Dataset(d) => d,
            EegcFile::Recording(r) => {
                let codes: Vec<u32> = r.label_map.keys().copied().collect();
                let trials = epoch(&r, &codes, args.epoch_offset, args.epoch_length, &r.label_map)?;
                Dataset::new(r.subject_id.clone(), r.montage.clone(), r.rate_hz, trials)?
            }
            EegcFile::Windows(_) => {
                return Err(fudnn::Error::Format(format!("{} is already windowed", path.display())).into())
            }
        };
        let clean = preprocess_dataset(&dataset, &config)?;
        let windows = dataset_windows(&clean, config.window_s, config.overlap)?;
        let stem = file_stem(path);
        save_eegc(&clean, out.record(&format!("{stem}.eegc"))?)?;
        save_eegc(&windows, out.record(&format!("{stem}.windows.eegc"))?)?;
        info!("{stem}: {} trials, {} windows", clean.len(), windows.windows.len());
        counts.push(json!({"input": path.display().to_string(), "trials": clean.len(), "windows": windows.windows.len()}));
    }
    out.write_json("counts.json", &counts)?;
    out.finish("preprocess", config_value(&config), BTreeMap::new())?;
    Ok(())
}

/// Window matrices of a dataset or window file, with montage and rate.
fn plv_inputs(path: &Path) -> CliResult<(Vec<ChannelMatrix>, Montage, f64)> {
    Ok(match load_any(path)? {
        EegcFile::Dataset(d) => (d.trials.into_iter().map(|t| t.data).collect(), d.montage, d.rate_hz),
        EegcFile::Windows(w) => (w.windows.into_iter().map(|w| w.data).collect(), w.montage, w.rate_hz),
        EegcFile::Recording(_) => {
            return Err(fudnn::Error::Format(format!("{} is a continuous recording", path.display())).into())
        }
    })
}

fn plv(args: PlvArgs) -> CliResult<()> {
    let mut out = OutDir::create(&args.out)?;
    out.add_input(&args.input)?;
    let (windows, montage, rate) = plv_inputs(&args.input)?;
    let options = match args.band {
        Some([lo, hi]) => PlvOptions::subband(lo, hi, rate),
        None => PlvOptions { rate_hz: rate, ..PlvOptions::default() },
    };
    let s = connectivity_matrix(&windows, &montage, &options)?;
    let strength = row_reduce(&s)?;
    let weights = minmax_normalize(&strength)?;
    let edges = threshold_edges(&s, args.threshold)?;

    let k = montage.len();
    let mut header = vec!["channel".to_string()];
    header.extend(montage.labels().iter().cloned());
    let rows: Vec<Vec<String>> = (0..k)
        .map(|i| {
            std::iter::once(montage.labels()[i].clone()).chain((0..k).map(|j| s.get(i, j).to_string())).collect()
        })
        .collect();
    out.write_table("plv_matrix.csv", &header, &rows)?;
    let weight_rows: Vec<Vec<String>> = (0..k)
        .map(|i| vec![montage.labels()[i].clone(), strength[i].to_string(), weights.as_slice()[i].to_string()])
        .collect();
    out.write_table("weights.csv", &["channel".into(), "strength".into(), "weight".into()], &weight_rows)?;
    out.write_json("weights.json", &weights_to_json(&weights, &montage)?)?;
    let mut buf = Vec::new();
    write_edges_csv(&edges, &montage, &mut buf)?;
    out.write_bytes("edges.csv", &buf)?;
    info!("{} windows, {} edges above {}", windows.len(), edges.len(), args.threshold);
    out.finish(
        "plv",
        json!({"band_hz": args.band, "threshold": args.threshold, "rate_hz": rate, "order": options.order}),
        BTreeMap::new(),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct HistoryRow {
    epoch: u64,
    loss: f64,
    train_accuracy: f64,
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    subject: &'a str,
    trial_id: u32,
    window: u32,
    truth: &'a str,
    predicted: &'a str,
}

fn prediction_rows(predictions: &[Prediction], class_set: ClassSet) -> Vec<PredictionRow<'_>> {
    let labels = class_set.labels();
    predictions
        .iter()
        .map(|p| PredictionRow {
            subject: &p.subject,
            trial_id: p.trial_id,
            window: p.window,
            truth: labels[p.truth].as_str(),
            predicted: labels[p.predicted].as_str(),
        })
        .collect()
}

fn write_confusion(out: &mut OutDir, confusion: &[Vec<usize>], class_set: ClassSet) -> CliResult<()> {
    let labels = class_set.labels();
    let mut header = vec!["truth".to_string()];
    header.extend(labels.iter().map(|l| l.to_string()));
    let rows: Vec<Vec<String>> = confusion
        .iter()
        .zip(labels)
        .map(|(row, l)| std::iter::once(l.to_string()).chain(row.iter().map(|c| c.to_string())).collect())
        .collect();
    out.write_table("confusion.csv", &header, &rows)
}

fn write_evaluations(out: &mut OutDir, evaluations: &[Evaluation]) -> CliResult<()> {
    let rows: Vec<ResultRow> = evaluations.iter().flat_map(Evaluation::rows).collect();
    out.write_csv("results.csv", &rows)?;
    out.write_json("summary.json", &Summary::new(evaluations)?)
}

fn train(args: TrainArgs) -> CliResult<()> {
    let config = args.experiment.resolve()?;
    let mut out = OutDir::create(&args.out)?;
    out.add_input(&args.input)?;
    if let Some(p) = &args.experiment.config {
        out.add_input(p)?;
    }
    let dataset = load_dataset(&args.input)?;
    let run = run_holdout(&dataset, &config)?;
    let evaluation = &run.evaluation;
    let network = &run.model.network;
    save_checkpoint(network, run.model.seed, run.model.history.len() as u64, out.root(), "model")?;
    out.record("model.json")?;
    out.record("model.bin")?;
    let history: Vec<HistoryRow> = run
        .model
        .history
        .iter()
        .map(|m| HistoryRow { epoch: m.epoch, loss: m.loss, train_accuracy: m.accuracy })
        .collect();
    out.write_csv("history.csv", &history)?;
    out.write_csv("predictions.csv", &prediction_rows(&run.predictions, config.class_set))?;
    write_confusion(&mut out, &evaluation.metrics.confusion, config.class_set)?;
    write_evaluations(&mut out, std::slice::from_ref(evaluation))?;
    let restricted = dataset.restrict_to(config.class_set);
    let split = json!({
        "train_trials": run.fold.train.iter().map(|&i| restricted.trials[i].trial_id).collect::<Vec<_>>(),
        "test_trials": run.fold.test.iter().map(|&i| restricted.trials[i].trial_id).collect::<Vec<_>>(),
        "audit": evaluation.folds[0].audit,
    });
    out.write_json("split.json", &split)?;
    if let Some(w) = network.channel_weights() {
        out.write_json("weights.json", &weights_to_json(w, &dataset.montage)?)?;
    }
    println!("{} accuracy {:.4}", config.variant, evaluation.metrics.mean);
    out.finish("train", config_value(&config), seeds(&[("experiment", config.seed), ("init", run.model.seed)]))?;
    Ok(())
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let mut out = OutDir::create(&args.out)?;
    out.add_input(&args.model)?;
    out.add_input(&args.data)?;
    let (network, manifest) = load_checkpoint(&args.model)?;
    let spec = network.spec();
    let class_set = ClassSet::try_from(spec.n_classes as u8)?;
    let dataset = load_dataset(&args.data)?.restrict_to(class_set);
    if dataset.montage.len() != spec.n_channels {
        return Err(fudnn::Error::Shape(format!(
            "model expects {} channels, data has {}",
            spec.n_channels,
            dataset.montage.len()
        ))
        .into());
    }
    let window_s = spec.n_samples as f64 / dataset.rate_hz;
    let windows = dataset_windows(&dataset, window_s, args.overlap)?;
    let predictions = predict_windows(&network, &windows.windows, class_set, 64)?;
    let (accuracy, confusion) = score(&predictions, class_set)?;
    out.write_csv("predictions.csv", &prediction_rows(&predictions, class_set))?;
    write_confusion(&mut out, &confusion, class_set)?;
    let row = ResultRow {
        subject: dataset.subject_id.clone(),
        variant: spec.architecture.to_string(),
        class_set: class_set.into(),
        fold: 0,
        accuracy,
    };
    out.write_csv("results.csv", &[row])?;
    println!("{} accuracy {accuracy:.4} on {} windows", spec.architecture, predictions.len());
    out.finish(
        "eval",
        json!({"window_s": window_s, "overlap": args.overlap, "class_set": u8::from(class_set)}),
        seeds(&[("model", manifest.seed)]),
    )?;
    Ok(())
}

fn ablation(args: AblationArgs) -> CliResult<()> {
    let config = args.experiment.resolve()?;
    let mut out = OutDir::create(&args.out)?;
    out.add_input(&args.input)?;
    if let Some(p) = &args.experiment.config {
        out.add_input(p)?;
    }
    let dataset = load_dataset(&args.input)?;
    let result = run_ablation(&dataset, &config)?;
    write_evaluations(&mut out, &result.variants)?;
    out.write_json("folds.json", &result.folds)?;
    for e in &result.variants {
        println!("{:<8} {:.4} ± {:.4}", e.variant.as_str(), e.metrics.mean, e.metrics.sd);
    }
    out.finish("ablation", config_value(&config), seeds(&[("experiment", config.seed)]))?;
    Ok(())
}

fn loso(args: LosoArgs) -> CliResult<()> {
    let config = args.experiment.resolve()?;
    let mut out = OutDir::create(&args.out)?;
    if let Some(p) = &args.experiment.config {
        out.add_input(p)?;
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.dir)
        .map_err(|source| CliError::Read { path: args.dir.clone(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "eegc"))
        .collect();
    paths.sort();
    let mut datasets = Vec::new();
    for p in &paths {
        if let EegcFile::Dataset(d) = load_any(p)? {
            out.add_input(p)?;
            datasets.push(d);
        }
    }
    if datasets.len() < 2 {
        return Err(fudnn::Error::Config(format!("{} holds fewer than two trial datasets", args.dir.display())).into());
    }
    let targets: Vec<String> = if args.target.iter().any(|t| t == "all") {
        datasets.iter().map(|d| d.subject_id.clone()).collect()
    } else {
        args.target.clone()
    };
    let evaluations = targets.iter().map(|t| run_loso(&datasets, t, &config)).collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<ResultRow> = evaluations.iter().flat_map(Evaluation::rows).collect();
    out.write_csv("results.csv", &rows)?;
    let audits: Vec<Value> = evaluations
        .iter()
        .map(|e| json!({"target": e.folds[0].subject, "audit": e.folds[0].audit}))
        .collect();
    out.write_json("audit.json", &audits)?;
    let accuracies: Vec<f64> = evaluations.iter().map(|e| e.metrics.mean).collect();
    out.write_json(
        "summary.json",
        &json!({
            "variant": config.variant.as_str(),
            "class_set": u8::from(config.class_set),
            "targets": targets,
            "accuracy": accuracies,
            "mean": fudnn::experiment::mean(&accuracies),
            "sd": fudnn::experiment::sample_sd(&accuracies),
            "sd_kind": "sample standard deviation over target subjects (n-1)",
        }),
    )?;
    for (t, a) in targets.iter().zip(&accuracies) {
        println!("{t} {a:.4}");
    }
    out.finish("loso", config_value(&config), seeds(&[("experiment", config.seed)]))?;
    Ok(())
}

fn channel_indices(montage: &Montage, wanted: &[String]) -> CliResult<Vec<usize>> {
    if wanted.is_empty() {
        return Ok((0..montage.len()).collect());
    }
    Ok(montage.indices_of(wanted)?)
}

fn analyze(args: AnalyzeArgs) -> CliResult<()> {
    let mut out = OutDir::create(&args.out)?;
    out.add_input(&args.input)?;
    let dataset = load_dataset(&args.input)?;
    let mut classes: Vec<_> = dataset.class_counts().into_keys().collect();
    classes.sort();
    if args.psd {
        let channels = channel_indices(&dataset.montage, &args.channels)?;
        let seg = (args.segment * dataset.rate_hz).round() as usize;
        let mut records = Vec::new();
        for &class in &classes {
            let trials: Vec<_> = dataset.trials.iter().filter(|t| t.label == class).collect();
            for &c in &channels {
                let mut mean: Option<(Vec<f64>, Vec<f64>)> = None;
                for t in &trials {
                    let p = psd_welch(&t.data.row_f64(c), dataset.rate_hz, seg, 0.5)?;
                    match &mut mean {
                        None => mean = Some((p.freqs_hz, p.power)),
                        Some((_, acc)) => acc.iter_mut().zip(&p.power).for_each(|(a, b)| *a += b),
                    }
                }
                let (freqs, power) = mean.expect("every listed class has trials");
                for (f, p) in freqs.iter().zip(&power) {
                    records.push(vec![
                        class.to_string(),
                        dataset.montage.labels()[c].clone(),
                        f.to_string(),
                        (p / trials.len() as f64).to_string(),
                    ]);
                }
            }
        }
        let header = ["class", "channel", "freq_hz", "power"].map(String::from);
        out.write_table("psd.csv", &header, &records)?;
    }
    if args.ersp {
        let name = match args.channels.as_slice() {
            [] => "Oz".to_string(),
            [one] => one.clone(),
            _ => return Err(CliError::Usage("--ersp takes a single channel".into())),
        };
        let channel = dataset
            .montage
            .index_of(&name)
            .ok_or_else(|| fudnn::Error::Mapping(format!("no channel named {name}")))?;
        let t0 = dataset.trials.first().map_or(0.0, |t| t.t_start_s);
        let config = ErspConfig {
            channel,
            baseline_s: args.baseline.unwrap_or([t0, t0 + 0.5]),
            freq_range_hz: args.freqs,
            n_times: args.times,
            window_s: args.segment,
        };
        let mut records = Vec::new();
        for &class in &classes {
            let trials: Vec<_> = dataset.trials.iter().filter(|t| t.label == class).cloned().collect();
            let map = ersp(&trials, &config)?;
            for (fi, f) in map.freqs_hz.iter().enumerate() {
                for (ti, t) in map.times_s.iter().enumerate() {
                    records.push(vec![class.to_string(), f.to_string(), t.to_string(), map.value(fi, ti).to_string()]);
                }
            }
        }
        let header = ["class", "freq_hz", "time_s", "db"].map(String::from);
        out.write_table("ersp.csv", &header, &records)?;
    }
    out.finish(
        "analyze",
        json!({
            "psd": args.psd, "ersp": args.ersp, "channels": args.channels, "segment_s": args.segment,
            "baseline_s": args.baseline, "freqs_hz": args.freqs, "times": args.times,
        }),
        BTreeMap::new(),
    )?;
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> CliResult<()> {
    let base: NetworkSpec = match &args.config {
        Some(path) => serde_json::from_value(read_json(path)?)
            .map_err(|e| fudnn::Error::Config(format!("network spec: {e}")))?,
        None => downscaled_spec(3),
    };
    let variants: Vec<Architecture> = match args.variant {
        Some(v) => vec![v],
        None => Architecture::ALL.to_vec(),
    };
    let mut records = Vec::new();
    let mut worst: f64 = 0.0;
    for v in variants {
        let report = grad_check_network(base.clone().with_architecture(v), args.seed, args.eps)?;
        println!("{:<8} max relative error {:.3e} over {} coordinates", v.as_str(), report.max_relative_error, report.n_checked);
        worst = worst.max(report.max_relative_error);
        records.push(vec![v.to_string(), report.max_relative_error.to_string(), report.n_checked.to_string()]);
    }
    println!("max relative error {worst:.3e}");
    if let Some(dir) = &args.out {
        let mut out = OutDir::create(dir)?;
        if let Some(p) = &args.config {
            out.add_input(p)?;
        }
        let header = ["variant", "max_relative_error", "coordinates"].map(String::from);
        out.write_table("gradcheck.csv", &header, &records)?;
        out.finish("gradcheck", json!({"spec": base, "eps": args.eps}), seeds(&[("init", args.seed)]))?;
    }
    if !(worst < GRADCHECK_TOLERANCE) {
        warn!("gradient check above tolerance");
        return Err(CliError::GradientMismatch(worst, GRADCHECK_TOLERANCE));
    }
    Ok(())
}

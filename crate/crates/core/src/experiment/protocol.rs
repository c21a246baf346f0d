use std::collections::{BTreeMap, HashSet};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folds::{make_folds, Fold};
use super::stats::{confusion_matrix, permutation_test, Metrics};
use super::{derive_seed, role, ExperimentConfig};
use crate::connectivity::fit_weights;
use crate::dsp::sliding_windows;
use crate::eeg::{ClassLabel, ClassSet, Dataset, Montage, Window};
use crate::error::{Error, Result};
use crate::nn::{predict, train_epoch, Architecture, EpochMetrics, Network, TrainData, TrainState};

/// Permutations used for the p-values attached to ablation results.
const ABLATION_PERMUTATIONS: usize = 10_000;

/// Trial identities shared by the two sides of a split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub train_windows: usize,
    pub test_windows: usize,
    pub train_trials: usize,
    pub test_trials: usize,
    /// `(subject, trial_id)` pairs found on both sides.
    pub shared_trials: Vec<(String, u32)>,
}

impl LeakageAudit {
    pub fn new(train: &[Window], test: &[Window]) -> Self {
        let ids = |w: &[Window]| -> HashSet<(String, u32)> {
            w.iter().map(|w| (w.subject_id.clone(), w.trial_id)).collect()
        };
        let (a, b) = (ids(train), ids(test));
        let mut shared_trials: Vec<(String, u32)> = a.intersection(&b).cloned().collect();
        shared_trials.sort();
        LeakageAudit {
            train_windows: train.len(),
            test_windows: test.len(),
            train_trials: a.len(),
            test_trials: b.len(),
            shared_trials,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.shared_trials.is_empty()
    }
}

/// Outcome of one train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    /// Subject whose windows were tested.
    pub subject: String,
    pub variant: Architecture,
    pub fold: usize,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub init_seed: u64,
    pub history: Vec<EpochMetrics>,
    pub audit: LeakageAudit,
}

/// Fold results of one variant with their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub variant: Architecture,
    pub class_set: ClassSet,
    pub metrics: Metrics,
    pub folds: Vec<FoldResult>,
}

impl Evaluation {
    fn from_folds(variant: Architecture, class_set: ClassSet, folds: Vec<FoldResult>) -> Result<Self> {
        let n = class_set.n_classes();
        let mut confusion = vec![vec![0; n]; n];
        for f in &folds {
            for (row, add) in confusion.iter_mut().zip(&f.confusion) {
                row.iter_mut().zip(add).for_each(|(a, b)| *a += b);
            }
        }
        let metrics = Metrics::from_folds(folds.iter().map(|f| f.accuracy).collect(), confusion)?;
        Ok(Evaluation { variant, class_set, metrics, folds })
    }

    /// True when no fold shares a trial between training and test.
    pub fn leakage_free(&self) -> bool {
        self.folds.iter().all(|f| f.audit.is_clean())
    }
}

/// Every variant on identical folds and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub folds: Vec<Fold>,
    /// In [`Architecture::ALL`] order. The p-value of each non-FuDNN entry
    /// compares its fold accuracies with FuDNN's.
    pub variants: Vec<Evaluation>,
}

impl AblationResult {
    pub fn get(&self, variant: Architecture) -> Option<&Evaluation> {
        self.variants.iter().find(|e| e.variant == variant)
    }

    /// Whether FuDNN's mean is at least every other variant's (ties count).
    pub fn fudnn_on_top(&self) -> bool {
        let Some(top) = self.get(Architecture::FuDnn) else { return false };
        self.variants.iter().all(|e| e.metrics.mean <= top.metrics.mean)
    }
}

/// A trained network and its per-epoch training metrics.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network<f32>,
    pub history: Vec<EpochMetrics>,
    pub seed: u64,
}

/// Class indices of `windows` under `class_set`.
fn class_indices(windows: &[Window], class_set: ClassSet) -> Result<Vec<usize>> {
    windows
        .iter()
        .map(|w| {
            class_set
                .index_of(w.label)
                .ok_or_else(|| Error::Mapping(format!("label {} is not in the {}-class set", w.label, class_set.n_classes())))
        })
        .collect()
}

/// Stacks windows into network inputs with the given labels.
pub fn windows_to_data(windows: &[Window], labels: Vec<usize>) -> Result<TrainData> {
    let first = windows.first().ok_or_else(|| Error::Contract("no windows".into()))?;
    let (k, t) = (first.data.n_channels(), first.data.n_samples());
    let mut x = Vec::with_capacity(windows.len() * k * t);
    for w in windows {
        if w.data.n_channels() != k || w.data.n_samples() != t {
            return Err(Error::Shape("windows differ in shape".into()));
        }
        x.extend_from_slice(w.data.as_slice());
    }
    TrainData::new(k, t, x, labels)
}

/// Fits connectivity weights (FuDNN only) and trains `variant` on `windows`
/// with the given class indices for `config.train.epochs` epochs.
pub fn train_model(
    windows: &[Window],
    labels: Vec<usize>,
    montage: &Montage,
    variant: Architecture,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<TrainedModel> {
    let data = windows_to_data(windows, labels)?;
    let spec = config.network_for(variant, data.n_channels, data.n_samples);
    let mut network = Network::<f32>::new(spec, seed)?;
    if variant.uses_channel_weights() {
        network.set_channel_weights(Some(fit_weights(windows, montage)?))?;
    }
    let mut state = TrainState::new(network, &config.train, seed);
    let mut history = Vec::with_capacity(config.train.epochs);
    for _ in 0..config.train.epochs {
        let m = train_epoch(&mut state, &data, &config.train)?;
        debug!("{variant} epoch {}: loss {:.4}, train accuracy {:.3}", m.epoch, m.loss, m.accuracy);
        history.push(m);
    }
    Ok(TrainedModel { network: state.network, history, seed })
}

/// Predicted class of one window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject: String,
    pub trial_id: u32,
    pub window: u32,
    pub truth: usize,
    pub predicted: usize,
}

/// Eval-mode predictions for labelled windows.
pub fn predict_windows(network: &Network<f32>, windows: &[Window], class_set: ClassSet, batch: usize) -> Result<Vec<Prediction>> {
    let truth = class_indices(windows, class_set)?;
    let data = windows_to_data(windows, truth.clone())?;
    let predicted = predict(network, &data, batch)?;
    Ok(windows
        .iter()
        .zip(truth.into_iter().zip(predicted))
        .map(|(w, (truth, predicted))| Prediction {
            subject: w.subject_id.clone(),
            trial_id: w.trial_id,
            window: w.index,
            truth,
            predicted,
        })
        .collect())
}

/// Accuracy and confusion matrix of a set of predictions.
pub fn score(predictions: &[Prediction], class_set: ClassSet) -> Result<(f64, Vec<Vec<usize>>)> {
    if predictions.is_empty() {
        return Err(Error::Contract("no predictions to score".into()));
    }
    let truth: Vec<usize> = predictions.iter().map(|p| p.truth).collect();
    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
    let correct = truth.iter().zip(&predicted).filter(|(a, b)| a == b).count();
    Ok((correct as f64 / truth.len() as f64, confusion_matrix(&truth, &predicted, class_set.n_classes())?))
}

/// Accuracy and confusion matrix of `network` on labelled windows.
pub fn evaluate(network: &Network<f32>, windows: &[Window], class_set: ClassSet, batch: usize) -> Result<(f64, Vec<Vec<usize>>)> {
    score(&predict_windows(network, windows, class_set, batch)?, class_set)
}

/// Windows of every trial, grouped by trial index.
fn windows_by_trial(dataset: &Dataset, config: &ExperimentConfig) -> Result<Vec<Vec<Window>>> {
    dataset.trials.iter().map(|t| sliding_windows(t, config.window_s, config.overlap)).collect()
}

fn gather(by_trial: &[Vec<Window>], trials: &[usize]) -> Vec<Window> {
    trials.iter().flat_map(|&i| by_trial[i].iter().cloned()).collect()
}

/// Training labels, permuted across trials when the null control is on.
/// Windows of one trial keep a common label either way.
fn training_labels(windows: &[Window], config: &ExperimentConfig, shuffle_seed: u64) -> Result<Vec<usize>> {
    let labels = class_indices(windows, config.class_set)?;
    if !config.shuffle_labels {
        return Ok(labels);
    }
    let mut per_trial: BTreeMap<(&str, u32), usize> = BTreeMap::new();
    for (w, &l) in windows.iter().zip(&labels) {
        per_trial.insert((w.subject_id.as_str(), w.trial_id), l);
    }
    let mut permuted: Vec<usize> = per_trial.values().copied().collect();
    permuted.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    let relabel: BTreeMap<(&str, u32), usize> = per_trial.keys().copied().zip(permuted).collect();
    Ok(windows.iter().map(|w| relabel[&(w.subject_id.as_str(), w.trial_id)]).collect())
}

/// Result of a single split together with what produced it.
struct SplitRun {
    result: FoldResult,
    model: TrainedModel,
    predictions: Vec<Prediction>,
}

fn run_split(
    train: &[Window],
    test: &[Window],
    montage: &Montage,
    variant: Architecture,
    config: &ExperimentConfig,
    fold: usize,
    subject: &str,
) -> Result<SplitRun> {
    let audit = LeakageAudit::new(train, test);
    if !audit.is_clean() {
        return Err(Error::Contract(format!("{} trials appear on both sides of fold {fold}", audit.shared_trials.len())));
    }
    let init_seed = derive_seed(config.seed, &[role::INIT, fold as u64]);
    let labels = training_labels(train, config, derive_seed(config.seed, &[role::SHUFFLE, fold as u64]))?;
    let model = train_model(train, labels, montage, variant, config, init_seed)?;
    let predictions = predict_windows(&model.network, test, config.class_set, config.eval_batch)?;
    let (accuracy, confusion) = score(&predictions, config.class_set)?;
    info!("{subject} {variant} fold {fold}: accuracy {accuracy:.4} on {} windows", test.len());
    let result = FoldResult {
        subject: subject.to_string(),
        variant,
        fold,
        accuracy,
        confusion,
        init_seed,
        history: model.history.clone(),
        audit,
    };
    Ok(SplitRun { result, model, predictions })
}

fn prepare(dataset: &Dataset, config: &ExperimentConfig) -> Result<(Dataset, Vec<Fold>)> {
    config.validate()?;
    let data = dataset.restrict_to(config.class_set);
    let folds = make_folds(&data, config.folds, derive_seed(config.seed, &[role::FOLDS]))?;
    Ok((data, folds))
}

fn run_folds(data: &Dataset, folds: &[Fold], by_trial: &[Vec<Window>], variant: Architecture, config: &ExperimentConfig) -> Result<Evaluation> {
    let results = folds
        .iter()
        .map(|f| {
            let train = gather(by_trial, &f.train);
            let test = gather(by_trial, &f.test);
            run_split(&train, &test, &data.montage, variant, config, f.index, &data.subject_id).map(|r| r.result)
        })
        .collect::<Result<Vec<_>>>()?;
    Evaluation::from_folds(variant, config.class_set, results)
}

/// Stratified k-fold cross-validation of `config.variant` on one subject.
///
/// Per fold, connectivity weights (FuDNN only) are fit on the training
/// windows, a fresh network is trained for a fixed number of epochs and its
/// accuracy is measured on the held-out windows.
pub fn run_subject_dependent(dataset: &Dataset, config: &ExperimentConfig) -> Result<Evaluation> {
    let (data, folds) = prepare(dataset, config)?;
    let by_trial = windows_by_trial(&data, config)?;
    run_folds(&data, &folds, &by_trial, config.variant, config)
}

/// All four variants on the same folds and initialization seeds. Only FuDNN
/// uses connectivity weighting.
pub fn run_ablation(dataset: &Dataset, config: &ExperimentConfig) -> Result<AblationResult> {
    let (data, folds) = prepare(dataset, config)?;
    let by_trial = windows_by_trial(&data, config)?;
    let mut variants = Architecture::ALL
        .into_iter()
        .map(|v| run_folds(&data, &folds, &by_trial, v, config))
        .collect::<Result<Vec<_>>>()?;
    let reference = variants
        .iter()
        .find(|e| e.variant == Architecture::FuDnn)
        .map(|e| e.metrics.fold_accuracies.clone())
        .expect("FuDNN is one of the variants");
    for e in variants.iter_mut().filter(|e| e.variant != Architecture::FuDnn) {
        let seed = derive_seed(config.seed, &[role::SHUFFLE, e.variant as u64, u64::MAX]);
        e.metrics.p_value = Some(permutation_test(&reference, &e.metrics.fold_accuracies, ABLATION_PERMUTATIONS, seed)?);
    }
    Ok(AblationResult { folds, variants })
}

/// Windows of a leave-one-subject-out split.
#[derive(Debug, Clone)]
pub struct LosoSplit {
    /// Index of the target in the dataset list.
    pub position: usize,
    pub montage: Montage,
    /// Pooled windows of every other subject.
    pub train: Vec<Window>,
    /// All windows of the target subject.
    pub test: Vec<Window>,
}

/// Pools every subject except `target` for training and keeps the target's
/// windows for testing. Subjects must share montage and rate.
pub fn loso_split(datasets: &[Dataset], target: &str, config: &ExperimentConfig) -> Result<LosoSplit> {
    config.validate()?;
    let position = datasets
        .iter()
        .position(|d| d.subject_id == target)
        .ok_or_else(|| Error::Config(format!("target subject {target:?} not among the datasets")))?;
    if datasets.len() < 2 {
        return Err(Error::Config("leave-one-subject-out needs at least two subjects".into()));
    }
    let reference = &datasets[position];
    if let Some(d) = datasets.iter().find(|d| d.montage != reference.montage || d.rate_hz != reference.rate_hz) {
        return Err(Error::Contract(format!("subject {} differs in montage or rate from {target}", d.subject_id)));
    }
    let mut seen = HashSet::new();
    if let Some(d) = datasets.iter().find(|d| !seen.insert(d.subject_id.as_str())) {
        return Err(Error::Contract(format!("subject {} appears twice", d.subject_id)));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for d in datasets {
        let restricted = d.restrict_to(config.class_set);
        let windows = windows_by_trial(&restricted, config)?.into_iter().flatten();
        if d.subject_id == target {
            test.extend(windows);
        } else {
            train.extend(windows);
        }
    }
    if test.is_empty() || train.is_empty() {
        return Err(Error::Config(format!("no windows of the selected classes for {target} or its training pool")));
    }
    Ok(LosoSplit { position, montage: reference.montage.clone(), train, test })
}

/// Leave-one-subject-out: train `config.variant` on every subject except
/// `target` (weights fit on the pooled training windows) and test on all of
/// the target's windows. Reported as a single fold.
pub fn run_loso(datasets: &[Dataset], target: &str, config: &ExperimentConfig) -> Result<Evaluation> {
    let split = loso_split(datasets, target, config)?;
    let run = run_split(&split.train, &split.test, &split.montage, config.variant, config, split.position, target)?;
    Evaluation::from_folds(config.variant, config.class_set, vec![run.result])
}

/// A single trained model evaluated on one held-out fold.
#[derive(Debug, Clone)]
pub struct HoldoutRun {
    pub fold: Fold,
    pub evaluation: Evaluation,
    pub model: TrainedModel,
    pub predictions: Vec<Prediction>,
}

/// Trains `config.variant` on the training side of the first of
/// `config.folds` stratified folds and tests on its held-out trials; with 5
/// folds this is an 80/20 trial-level split.
pub fn run_holdout(dataset: &Dataset, config: &ExperimentConfig) -> Result<HoldoutRun> {
    let (data, mut folds) = prepare(dataset, config)?;
    let fold = folds.swap_remove(0);
    let by_trial = windows_by_trial(&data, config)?;
    let train = gather(&by_trial, &fold.train);
    let test = gather(&by_trial, &fold.test);
    let run = run_split(&train, &test, &data.montage, config.variant, config, fold.index, &data.subject_id)?;
    Ok(HoldoutRun {
        fold,
        evaluation: Evaluation::from_folds(config.variant, config.class_set, vec![run.result])?,
        model: run.model,
        predictions: run.predictions,
    })
}

/// Labels of a class set, in class-index order, as strings.
pub(crate) fn label_names(class_set: ClassSet) -> Vec<&'static str> {
    class_set.labels().iter().map(|l: &ClassLabel| l.as_str()).collect()
}

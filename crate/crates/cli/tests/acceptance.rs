//! Acceptance run: one PASS/FAIL line per criterion, with wall time against
//! its budget. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p fudnn-cli --test acceptance -- 3 4`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fudnn::connectivity::{
    minmax_normalize, pearson, pearson_cc, plv_pairwise, row_reduce, symmetrize, ChannelWeights, PhaseTensor,
    PlvKind, PlvMatrix,
};
use fudnn::dsp::{dataset_windows, design_fir_bandpass, filtfilt};
use fudnn::eeg::{ChannelMatrix, ClassLabel, Dataset, Montage, Trial};
use fudnn::experiment::{
    loso_split, permutation_test, permutation_test_exact, run_ablation, run_loso, run_subject_dependent,
    ExperimentConfig,
};
use fudnn::nn::gradcheck::{downscaled_spec, network_objective, TapeObjective};
use fudnn::nn::{
    bilstm, grad_check, grad_check_network, Architecture, LstmVars, Mode, Network, NetworkSpec, ScaledGradient,
    Tape, Tensor, Var,
};
use fudnn::synth::{generate, SynthSpec};
use mimalloc::MiMalloc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: fudnn::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- 1

fn shape_contract() -> Check {
    let net = lib(Network::<f32>::new(NetworkSpec::table_one(4), 1))?;
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = lib(net.forward(&mut tape, &Tensor::zeros([1, 64, 500]), Mode::Eval, &mut rng))?;
    let got: Vec<Vec<usize>> = out.trace.iter().map(|r| r.output.clone()).collect();
    let want = vec![
        vec![40, 64, 451],
        vec![80, 64, 402],
        vec![80, 64, 57],
        vec![80, 1, 57],
        vec![80, 1, 8],
        vec![8, 200],
        vec![1, 1600],
        vec![1, 4],
    ];
    ensure(got == want, || format!("realized trace {got:?}"))?;
    for n in 2..=4 {
        let trace = lib(NetworkSpec::table_one(n).shape_trace())?;
        ensure(trace.last().map(|r| r.output.clone()) == Some(vec![1, n]), || format!("{n}-class head"))?;
    }
    Ok("8 block outputs match for a 1×64×500 input".into())
}

// ---------------------------------------------------------------- 2

fn zero_subject(id: &str) -> Result<Dataset, String> {
    let trials = (0..200)
        .map(|i| Trial {
            label: ClassLabel::ALL[i % 4],
            data: ChannelMatrix::zeros(2, 1250),
            rate_hz: 250.0,
            subject_id: id.into(),
            trial_id: i as u32,
            t_start_s: 0.0,
        })
        .collect();
    lib(Dataset::new(id, lib(Montage::numbered(2))?, 250.0, trials))
}

fn window_counts() -> Check {
    let one = lib(dataset_windows(&zero_subject("S01")?, 2.0, 0.5))?.windows.len();
    ensure(one == 800, || format!("{one} windows per subject"))?;
    let subjects = (1..=5).map(|i| zero_subject(&format!("S{i:02}"))).collect::<Result<Vec<_>, _>>()?;
    let split = lib(loso_split(&subjects, "S03", &ExperimentConfig::desk()))?;
    ensure(split.train.len() == 3200 && split.test.len() == 800, || {
        format!("{} training / {} test windows", split.train.len(), split.test.len())
    })?;
    ensure(split.train.iter().all(|w| w.subject_id != "S03"), || "target window in training pool".into())?;
    Ok("800 windows per subject; 3200 pooled training windows".into())
}

// ---------------------------------------------------------------- 3

fn random_phases(rng: &mut ChaCha8Rng, n: usize, k: usize, t: usize) -> Result<PhaseTensor, String> {
    let phases = (0..n * k * t).map(|_| PI - rng.random::<f64>() * 2.0 * PI).collect();
    lib(PhaseTensor::new(n, k, t, phases, 250.0, [0.5, 13.0]))
}

/// `|Σ e^{j(φa − φb)}| / NT`, summing real and imaginary parts by hand.
fn brute_force_plv(t: &PhaseTensor, a: usize, b: usize) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for n in 0..t.n_trials() {
        for (pa, pb) in t.series(n, a).iter().zip(t.series(n, b)) {
            re += (pa - pb).cos();
            im += (pa - pb).sin();
        }
    }
    re.hypot(im) / (t.n_trials() * t.n_samples()) as f64
}

fn plv_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let (k, n, t) = (rng.random_range(2..6), rng.random_range(1..4), rng.random_range(1..20));
        let m = lib(plv_pairwise(&random_phases(&mut rng, n, k, t)?))?;
        ensure(m.values().iter().all(|v| (0.0..=1.0).contains(v)), || format!("out of range for {n}×{k}×{t}"))?;
    }

    let series: Vec<f64> = (0..50).map(|_| PI - rng.random::<f64>() * 2.0 * PI).collect();
    let same = lib(PhaseTensor::new(1, 2, 50, [series.clone(), series].concat(), 250.0, [0.5, 13.0]))?;
    let self_plv = lib(plv_pairwise(&same))?.get(0, 1);
    ensure((self_plv - 1.0).abs() <= 1e-12, || format!("plv(x, x) = {self_plv}"))?;

    let alternating: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 0.0 } else { PI }).collect();
    let alt = lib(PhaseTensor::new(1, 2, 8, [vec![0.0; 8], alternating].concat(), 250.0, [0.5, 13.0]))?;
    let cancelled = lib(plv_pairwise(&alt))?.get(0, 1);
    ensure(cancelled.abs() <= 1e-12, || format!("alternating phases give {cancelled}"))?;

    let mut worst = 0.0f64;
    let mut cases = 0;
    for k in 2..=4 {
        for n in 1..=3 {
            for t in 1..=8 {
                let tensor = random_phases(&mut rng, n, k, t)?;
                let m = lib(plv_pairwise(&tensor))?;
                for a in 0..k {
                    for b in a + 1..k {
                        worst = worst.max((m.get(a, b) - brute_force_plv(&tensor, a, b)).abs());
                    }
                }
                cases += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("oracle disagreement {worst:.2e}"))?;
    Ok(format!("1000 instances in range; {cases} oracle shapes, max |Δ| {worst:.1e}"))
}

// ---------------------------------------------------------------- 4

fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    idx
}

fn strength_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for k in 2..=24 {
        let mut v = vec![0.0; k * k];
        for i in 0..k {
            for j in i + 1..k {
                v[i * k + j] = rng.random::<f64>();
            }
        }
        let p = lib(PlvMatrix::new(k, v, PlvKind::UpperTriangular))?;
        let s = lib(symmetrize(&p))?;
        for i in 0..k {
            for j in 0..k {
                ensure(s.get(i, j) == s.get(j, i), || format!("S[{i}][{j}] ≠ S[{j}][{i}] for K = {k}"))?;
            }
        }
        for (col, got) in lib(row_reduce(&s))?.iter().enumerate() {
            let want: f64 = (0..k)
                .filter(|&row| row != col)
                .map(|row| if row < col { p.get(row, col) } else { p.get(col, row) })
                .sum();
            worst = worst.max((got - want).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("row_reduce off by {worst:.2e}"))?;

    let w = lib(minmax_normalize(&[2.0, 4.0, 6.0]))?;
    ensure(w.as_slice() == [0.0, 0.5, 1.0], || format!("[2, 4, 6] → {:?}", w.as_slice()))?;

    for _ in 0..10_000 {
        let k = rng.random_range(2..64);
        let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 60.0).collect();
        let w = lib(minmax_normalize(&v))?;
        ensure(argsort(&v) == argsort(w.as_slice()), || format!("order changed for {v:?}"))?;
    }
    Ok(format!("symmetry exact, row sums within {worst:.1e}, order kept on 10⁴ vectors"))
}

// ---------------------------------------------------------------- 5

fn random_tensor(shape: &[usize], seed: u64) -> Result<Tensor<f64>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    lib(Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()))
}

fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> fudnn::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = tape.value(y).numel();
    tape.sum_weighted(y, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn layer_error<F>(leaves: Vec<Tensor<f64>>, build: F) -> Result<f64, String>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> fudnn::Result<Var>,
{
    Ok(lib(grad_check(&mut TapeObjective::new(leaves, build), 1e-6))?.max_relative_error)
}

fn gradient_checks() -> Check {
    let mut errors: Vec<(String, f64)> = Vec::new();
    let conv = vec![random_tensor(&[2, 2, 3, 12], 1)?, random_tensor(&[3, 2, 2, 4], 2)?, random_tensor(&[3], 3)?];
    errors.push((
        "conv".into(),
        layer_error(conv, |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), (1, 2))?;
            project(t, y, 4)
        })?,
    ));
    let bn = vec![random_tensor(&[3, 2, 2, 5], 5)?, random_tensor(&[2], 6)?, random_tensor(&[2], 7)?];
    errors.push((
        "batch norm".into(),
        layer_error(bn, |t, v| {
            let (y, _) = t.batch_norm_train(v[0], v[1], v[2], 1e-5)?;
            project(t, y, 8)
        })?,
    ));
    let mut x = random_tensor(&[4, 30], 9)?;
    x.data_mut().iter_mut().for_each(|v| *v += 0.05 * v.signum());
    errors.push((
        "elu".into(),
        layer_error(vec![x], |t, v| {
            let y = t.elu(v[0])?;
            project(t, y, 10)
        })?,
    ));
    errors.push((
        "avg pool".into(),
        layer_error(vec![random_tensor(&[2, 3, 2, 23], 11)?], |t, v| {
            let y = t.avg_pool(v[0], 7, 7)?;
            project(t, y, 12)
        })?,
    ));
    let dw = vec![random_tensor(&[2, 3, 5, 6], 13)?, random_tensor(&[3, 5], 14)?, random_tensor(&[3], 15)?];
    errors.push((
        "depthwise".into(),
        layer_error(dw, |t, v| {
            let y = t.depthwise(v[0], v[1], Some(v[2]))?;
            project(t, y, 16)
        })?,
    ));
    let (f, h) = (4, 2);
    let lstm = vec![
        random_tensor(&[2, 3, f], 17)?,
        random_tensor(&[f, 4 * h], 18)?,
        random_tensor(&[h, 4 * h], 19)?,
        random_tensor(&[4 * h], 20)?,
        random_tensor(&[f, 4 * h], 21)?,
        random_tensor(&[h, 4 * h], 22)?,
        random_tensor(&[4 * h], 23)?,
    ];
    errors.push((
        "bilstm".into(),
        layer_error(lstm, |t, v| {
            let fwd = LstmVars { w_ih: v[1], w_hh: v[2], bias: v[3] };
            let bwd = LstmVars { w_ih: v[4], w_hh: v[5], bias: v[6] };
            let y = bilstm(t, v[0], fwd, bwd)?;
            project(t, y, 24)
        })?,
    ));
    let dense = vec![random_tensor(&[5, 6], 25)?, random_tensor(&[6, 4], 26)?, random_tensor(&[4], 27)?];
    errors.push((
        "dense + softmax".into(),
        layer_error(dense, |t, v| {
            let z = t.matmul(v[0], v[1])?;
            let z = t.add_bias(z, v[2])?;
            t.softmax_cross_entropy(z, &[0, 1, 2, 3, 1])
        })?,
    ));
    for arch in Architecture::ALL {
        let report = lib(grad_check_network(downscaled_spec(3).with_architecture(arch), 31, 1e-6))?;
        errors.push((format!("{} stack", arch.as_str()), report.max_relative_error));
    }
    let (name, worst) = errors.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    ensure(worst < 1e-4, || format!("{name}: relative error {worst:.2e}"))?;

    // Negative control: inflate the first conv kernel's gradient by half.
    let objective = lib(network_objective(downscaled_spec(3), 4, 31))?;
    let mut start = 0;
    let mut range = None;
    for p in objective.network.params().iter().filter(|p| p.trainable) {
        if p.name == "conv1.weight" {
            range = Some(start..start + p.value.numel());
        }
        start += p.value.numel();
    }
    let range = range.ok_or("no conv1.weight parameter")?;
    let mut broken = ScaledGradient { inner: objective, range, factor: 1.5 };
    let control = lib(grad_check(&mut broken, 1e-6))?.max_relative_error;
    ensure(control > 1e-2, || format!("corrupted backward pass scored only {control:.2e}"))?;
    Ok(format!("{} checks, worst {worst:.1e} ({name}); corrupted control {control:.2}", errors.len()))
}

// ---------------------------------------------------------------- 6

fn zero_phase() -> Check {
    let filter = lib(design_fir_bandpass(30, 0.5, 13.0, 250.0))?;
    let x: Vec<f64> = (0..1000).map(|i| (2.0 * PI * 8.0 * i as f64 / 250.0).sin()).collect();
    let y = lib(filtfilt(&x, &filter))?;
    let xc = |lag: i64| -> f64 { (100..900).map(|i| x[i] * y[(i as i64 + lag) as usize]).sum() };
    let lag = (-25i64..=25).max_by(|&a, &b| xc(a).total_cmp(&xc(b))).unwrap_or(i64::MAX);
    ensure(lag == 0, || format!("cross-correlation peaks at lag {lag}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noise: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let forward = lib(filtfilt(&noise, &filter))?;
    let mut reversed_in = noise.clone();
    reversed_in.reverse();
    let mut reversed_out = lib(filtfilt(&reversed_in, &filter))?;
    reversed_out.reverse();
    let scale = forward.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = forward.iter().zip(&reversed_out).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
    ensure(asym <= 1e-9, || format!("time-reversal asymmetry {asym:.2e}"))?;

    let dc = lib(filtfilt(&[3.0; 1000], &filter))?;
    let residual = dc[125..875].iter().map(|v| v * v).sum::<f64>() / 750.0;
    let rejection = 1.0 - residual.sqrt() / 3.0;
    ensure(rejection >= 0.95, || format!("DC rejection {:.1}%", 100.0 * rejection))?;
    Ok(format!("lag 0, reversal asymmetry {asym:.1e}, DC rejection {:.2}%", 100.0 * rejection))
}

// ---------------------------------------------------------------- 7

fn default_subject(seed: u64) -> Result<Dataset, String> {
    let spec = SynthSpec { seed, ..SynthSpec::default() };
    lib(generate(&spec))?.into_iter().next().ok_or_else(|| "generator returned no subject".into())
}

fn end_to_end() -> Check {
    let dataset = default_subject(7)?;
    let config = ExperimentConfig { seed: 7, ..ExperimentConfig::desk() };
    let real = lib(run_subject_dependent(&dataset, &config))?;
    let shuffled = lib(run_subject_dependent(&dataset, &ExperimentConfig { shuffle_labels: true, ..config }))?;
    let (m, c) = (real.metrics.mean, shuffled.metrics.mean);
    let detail = format!("FuDNN 5-fold mean {m:.4}; shuffled-label control {c:.4}");
    ensure(real.leakage_free() && shuffled.leakage_free(), || "fold audit failed".into())?;
    ensure(m >= 0.90, || detail.clone())?;
    ensure((c - 0.25).abs() <= 0.10, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 8

const ABLATION_SEEDS: [u64; 5] = [7, 11, 13, 17, 19];

fn ablation_ordering() -> Check {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in ABLATION_SEEDS {
        let dataset = default_subject(seed)?;
        let result = lib(run_ablation(&dataset, &ExperimentConfig { seed, ..ExperimentConfig::desk() }))?;
        let means: Vec<String> =
            result.variants.iter().map(|e| format!("{} {:.3}", e.variant.as_str(), e.metrics.mean)).collect();
        let top = result.fudnn_on_top();
        wins += usize::from(top);
        lines.push(format!("seed {seed}: {}{}", means.join(", "), if top { " *" } else { "" }));
    }
    for l in &lines {
        println!("    {l}");
    }
    ensure(wins >= 4, || format!("FuDNN highest in {wins} of 5 seeds"))?;
    Ok(format!("FuDNN highest (ties counted) in {wins} of 5 seeds"))
}

// ---------------------------------------------------------------- 9

fn loso() -> Check {
    let spec = SynthSpec { n_subjects: 5, ..SynthSpec::default() };
    let subjects = lib(generate(&spec))?;
    let config = ExperimentConfig { seed: 7, ..ExperimentConfig::desk() };
    let chance = 1.0 / config.class_set.n_classes() as f64;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for target in subjects.iter().map(|d| d.subject_id.clone()) {
        let split = lib(loso_split(&subjects, &target, &config))?;
        let overlap = split.train.iter().filter(|w| w.subject_id == target).count();
        let eval = lib(run_loso(&subjects, &target, &config))?;
        let fold = &eval.folds[0];
        let acc = fold.accuracy;
        if overlap != 0 || !fold.audit.is_clean() || fold.audit.test_windows != split.test.len() {
            failures.push(format!("{target}: leakage audit failed"));
        }
        if acc <= chance + 0.15 {
            failures.push(format!("{target}: accuracy {acc:.4}"));
        }
        results.push(format!("{target} {acc:.3}"));
    }
    ensure(failures.is_empty(), || format!("{}; all: {}", failures.join("; "), results.join(", ")))?;
    Ok(format!("{}; no test window in any training pool", results.join(", ")))
}

// ---------------------------------------------------------------- 10

/// Enumerates all sign flips of the paired differences.
fn exhaustive_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let observed = d.iter().sum::<f64>().abs();
    let tol = 1e-12 * d.iter().map(|v| v.abs()).sum::<f64>();
    let n = d.len();
    let hits = (0u64..1 << n)
        .filter(|mask| {
            let s: f64 = d.iter().enumerate().map(|(i, v)| if mask >> i & 1 == 1 { -v } else { *v }).sum();
            s.abs() >= observed - tol
        })
        .count();
    hits as f64 / (1u64 << n) as f64
}

/// n Σxy − Σx Σy over the root of the product of the centred sums of squares.
fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn statistics() -> Check {
    let n_perm = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let acc: Vec<f64> = (0..5).map(|_| rng.random()).collect();
    let p_same = lib(permutation_test(&acc, &acc, n_perm, 1))?;
    ensure(p_same == 1.0, || format!("identical pairs give p = {p_same}"))?;

    let tolerance = 2.0 / (n_perm as f64).sqrt();
    let mut worst = 0.0f64;
    for n in 1..=12 {
        for rep in 0..3 {
            let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let b: Vec<f64> = a.iter().map(|v| v - 0.1 * rep as f64 + rng.random_range(-0.1..0.1)).collect();
            let oracle = exhaustive_p(&a, &b);
            let exact = lib(permutation_test_exact(&a, &b))?;
            ensure((exact - oracle).abs() < 1e-12, || format!("exact enumeration {exact} vs {oracle} at n = {n}"))?;
            let sampled = lib(permutation_test(&a, &b, n_perm, 100 + n as u64))?;
            worst = worst.max((sampled - oracle).abs());
        }
    }
    ensure(worst <= tolerance, || format!("Monte Carlo off by {worst:.4} (allowed {tolerance:.4})"))?;

    let mut pearson_gap = 0.0f64;
    for _ in 0..500 {
        let x: Vec<f64> = (0..64).map(|_| rng.random()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * rng.random_range(-1.0..1.0) + rng.random::<f64>()).collect();
        pearson_gap = pearson_gap.max((lib(pearson(&x, &y))? - textbook_pearson(&x, &y)).abs());
    }
    ensure(pearson_gap <= 1e-12, || format!("Pearson off the textbook formula by {pearson_gap:.2e}"))?;
    let w = lib(ChannelWeights::new((0..64).map(|_| rng.random()).collect()))?;
    let r = lib(pearson_cc(&w, &w))?;
    ensure(r == 1.0, || format!("identical weights correlate at {r}"))?;
    Ok(format!("Monte Carlo within {worst:.4} of enumeration; Pearson within {pearson_gap:.1e}"))
}

// ---------------------------------------------------------------- 11

fn fudnn(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fudnn"))
        .args(args)
        .output()
        .map_err(|e| format!("could not start fudnn: {e}"))?;
    ensure(out.status.success(), || {
        format!("fudnn {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn compared_files(dir: &Path) -> Result<Vec<String>, String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.ends_with(".csv") || n.starts_with("model."))
        .collect();
    names.sort();
    Ok(names)
}

fn reproducibility() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    fudnn(&["--threads", "1", "synth", "--out", &p("raw")])?;
    fudnn(&["--threads", "1", "preprocess", "--input", &p("raw/S01.eegc"), "--out", &p("pre")])?;
    for run in ["a", "b"] {
        fudnn(&["--threads", "1", "train", "--input", &p("pre/S01.eegc"), "--seed", "7", "--out", &p(run)])?;
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let names = compared_files(&a)?;
    ensure(names == compared_files(&b)?, || "runs produced different file sets".into())?;
    ensure(names.iter().any(|n| n == "model.bin") && names.iter().any(|n| n == "results.csv"), || {
        format!("missing checkpoint or results among {names:?}")
    })?;
    for n in &names {
        let same = fs::read(a.join(n)).map_err(|e| e.to_string())? == fs::read(b.join(n)).map_err(|e| e.to_string())?;
        ensure(same, || format!("{n} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical: {}", names.len(), names.join(", ")))
}

// ----------------------------------------------------------------

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "shape contract", budget: Duration::from_secs(1), run: shape_contract },
        Criterion { id: 2, name: "window counts", budget: Duration::from_secs(1), run: window_counts },
        Criterion { id: 3, name: "PLV suite", budget: Duration::from_secs(10), run: plv_suite },
        Criterion { id: 4, name: "strength and normalization", budget: Duration::from_secs(10), run: strength_suite },
        Criterion { id: 5, name: "gradient checks", budget: Duration::from_secs(120), run: gradient_checks },
        Criterion { id: 6, name: "zero-phase filtering", budget: Duration::from_secs(10), run: zero_phase },
        Criterion { id: 7, name: "desk end-to-end", budget: Duration::from_secs(15 * 60), run: end_to_end },
        Criterion { id: 8, name: "ablation ordering", budget: Duration::from_secs(45 * 60), run: ablation_ordering },
        Criterion { id: 9, name: "leave-one-subject-out", budget: Duration::from_secs(30 * 60), run: loso },
        Criterion { id: 10, name: "statistics", budget: Duration::from_secs(10), run: statistics },
        Criterion { id: 11, name: "reproducibility", budget: Duration::from_secs(5 * 60), run: reproducibility },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.budget;
        let (pass, detail) = match outcome {
            Ok(d) if in_time => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(e) => (false, e),
        };
        failed += usize::from(!pass);
        ran += 1;
        println!(
            "{} {:>2} {:<28} {:>8.2}s / {:>5}s  {}",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            detail
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

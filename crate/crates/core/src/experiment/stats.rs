use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fold accuracies and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over folds (`n − 1` denominator); 0 for a
    /// single fold.
    pub sd: f64,
    /// Rows are true classes, columns predictions, summed over folds.
    pub confusion: Vec<Vec<usize>>,
    /// Two-sided paired permutation p-value against a comparator, if any.
    pub p_value: Option<f64>,
}

impl Metrics {
    pub fn from_folds(fold_accuracies: Vec<f64>, confusion: Vec<Vec<usize>>) -> Result<Self> {
        if fold_accuracies.is_empty() {
            return Err(Error::Contract("metrics need at least one fold".into()));
        }
        if let Some(a) = fold_accuracies.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Contract(format!("accuracy {a} outside [0, 1]")));
        }
        Ok(Metrics {
            mean: mean(&fold_accuracies),
            sd: sample_sd(&fold_accuracies),
            fold_accuracies,
            confusion,
            p_value: None,
        })
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard deviation with Bessel's correction; 0 below two values.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Counts of (true, predicted) class pairs.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    if truth.len() != predicted.len() {
        return Err(Error::Contract(format!("{} labels vs {} predictions", truth.len(), predicted.len())));
    }
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Range(format!("class {t} or {p} outside 0..{n_classes}")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Contract("paired samples are empty".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Relative slack so flips that tie the observed statistic count as "at
/// least as extreme" despite summation-order rounding.
fn tie_slack(d: &[f64]) -> f64 {
    1e-12 * d.iter().map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE)
}

/// Two-sided paired sign-flip permutation test on the mean difference.
///
/// Each of `n_perm` draws flips the sign of every difference with
/// probability ½; `p = (1 + #{|mean*| ≥ |mean|}) / (1 + n_perm)`, which is
/// never 0.
pub fn permutation_test(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<f64> {
    let d = differences(a, b)?;
    let observed = d.iter().sum::<f64>().abs() - tie_slack(&d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..n_perm {
        let s: f64 = d.iter().map(|&x| if rng.random::<bool>() { x } else { -x }).sum();
        if s.abs() >= observed {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (n_perm + 1) as f64)
}

/// Exact two-sided sign-flip p-value over all `2ⁿ` assignments (n ≤ 24).
pub fn permutation_test_exact(a: &[f64], b: &[f64]) -> Result<f64> {
    let d = differences(a, b)?;
    if d.len() > 24 {
        return Err(Error::Config(format!("{} pairs is too many to enumerate", d.len())));
    }
    let observed = d.iter().sum::<f64>().abs() - tie_slack(&d);
    let total = 1u64 << d.len();
    let extreme = (0..total)
        .filter(|mask| {
            let s: f64 = d.iter().enumerate().map(|(i, &x)| if mask >> i & 1 == 1 { -x } else { x }).sum();
            s.abs() >= observed
        })
        .count();
    Ok(extreme as f64 / total as f64)
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eeg::{ClassLabel, Dataset};
use crate::error::{Error, Result};

/// Trial indices (into `dataset.trials`) on each side of one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified `k`-fold assignment of whole trials.
///
/// Each class is shuffled with `seed` and dealt round-robin, so the test sets
/// are disjoint, cover every trial once, and hold `⌊n_c/k⌋` or `⌈n_c/k⌉`
/// trials of every class `c`.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("{k} folds; at least 2 are needed")));
    }
    let counts = dataset.class_counts();
    let smallest = counts.values().copied().min().unwrap_or(0);
    if k > smallest {
        return Err(Error::Config(format!(
            "{k} folds exceed the smallest class count ({smallest})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    // Classes are dealt in a fixed order so the deal depends only on `seed`.
    let mut offset = 0;
    for class in ClassLabel::ALL {
        let mut members: Vec<usize> =
            dataset.trials.iter().enumerate().filter(|(_, t)| t.label == class).map(|(i, _)| i).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        for (j, idx) in members.into_iter().enumerate() {
            tests[(offset + j) % k].push(idx);
        }
        // Rotate the starting fold so leftovers spread across folds.
        offset += counts[&class] % k;
    }
    Ok(tests
        .into_iter()
        .enumerate()
        .map(|(index, mut test)| {
            test.sort_unstable();
            let train = (0..dataset.len()).filter(|i| test.binary_search(i).is_err()).collect();
            Fold { index, train, test }
        })
        .collect())
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClassLabel, Dataset};
use crate::error::{Error, Result};

/// Stratified trial-level split into `(train, test)`.
///
/// Each class contributes `round(fraction × n_class)` trials to the training
/// set and the rest to the test set. Windows are never split here; callers cut
/// windows after splitting so a trial's windows stay on one side.
pub fn split_trials(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction {fraction} must lie in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in ClassLabel::ALL {
        let mut members: Vec<usize> = dataset
            .trials
            .iter()
            .enumerate()
            .filter(|(_, t)| t.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let n_train = (fraction * members.len() as f64).round() as usize;
        if n_train == 0 || n_train == members.len() {
            return Err(Error::Config(format!(
                "class {class} has {} trials, too few for a {fraction} split",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        train_idx.extend_from_slice(&members[..n_train]);
        test_idx.extend_from_slice(&members[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((subset(dataset, &train_idx), subset(dataset, &test_idx)))
}

/// Copies the trials at `indices` into a new dataset.
pub fn subset(dataset: &Dataset, indices: &[usize]) -> Dataset {
    Dataset {
        subject_id: dataset.subject_id.clone(),
        montage: dataset.montage.clone(),
        rate_hz: dataset.rate_hz,
        trials: indices.iter().map(|&i| dataset.trials[i].clone()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::eeg::{ChannelMatrix, Montage, Trial};

    fn dataset(per_class: usize) -> Dataset {
        let trials = (0..per_class * 4)
            .map(|i| Trial {
                label: ClassLabel::ALL[i % 4],
                data: ChannelMatrix::zeros(2, 4),
                rate_hz: 100.0,
                subject_id: "S".into(),
                trial_id: i as u32,
                t_start_s: 0.0,
            })
            .collect();
        Dataset::new("S", Montage::numbered(2).unwrap(), 100.0, trials).unwrap()
    }

    #[test]
    fn eighty_twenty_split_of_two_hundred() {
        let (train, test) = split_trials(&dataset(50), 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (160, 40));
        for class in ClassLabel::ALL {
            assert_eq!(train.class_counts()[&class], 40);
            assert_eq!(test.class_counts()[&class], 10);
        }
    }

    #[test]
    fn half_split_of_two_per_class() {
        let (train, test) = split_trials(&dataset(2), 0.5, 9).unwrap();
        assert!(train.class_counts().values().all(|&c| c == 1));
        assert!(test.class_counts().values().all(|&c| c == 1));
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let ds = dataset(13);
        let (a_train, a_test) = split_trials(&ds, 0.7, 42).unwrap();
        let (b_train, _) = split_trials(&ds, 0.7, 42).unwrap();
        assert_eq!(a_train, b_train);
        let train: HashSet<u32> = a_train.trials.iter().map(|t| t.trial_id).collect();
        let test: HashSet<u32> = a_test.trials.iter().map(|t| t.trial_id).collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), ds.len());
    }

    #[test]
    fn too_few_trials_is_a_configuration_error() {
        assert!(matches!(split_trials(&dataset(1), 0.8, 0), Err(Error::Config(_))));
        assert!(split_trials(&dataset(4), 1.0, 0).is_err());
    }
}

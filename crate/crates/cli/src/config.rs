//! Layered settings: built-in preset, then a JSON file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fudnn::experiment::ExperimentConfig;
use fudnn::nn::Architecture;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Recursively overlays `overlay` onto `base`: objects merge key by key,
/// anything else replaces.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.into(), source })
}

/// Starting point before the config file is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Reduced network and short schedule for a single CPU core.
    Desk,
    /// Full-size layer stack with the long schedule.
    TableOne,
}

impl Preset {
    pub fn config(self) -> ExperimentConfig {
        match self {
            Preset::Desk => ExperimentConfig::desk(),
            Preset::TableOne => ExperimentConfig::default(),
        }
    }
}

/// Experiment settings shared by `train`, `ablation` and `loso`.
#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// JSON experiment configuration; only the fields present override the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CNN-I, CNN-II, CNN-III or FuDNN.
    #[arg(long)]
    pub variant: Option<Architecture>,
    /// Number of classes: 2, 3 or 4.
    #[arg(long)]
    pub classes: Option<u8>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Window length in seconds.
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long)]
    pub overlap: Option<f64>,
    /// Permute training labels across trials (null control).
    #[arg(long)]
    pub shuffle_labels: bool,
}

impl ExperimentArgs {
    /// Effective configuration: flag > config file > preset.
    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut value = serde_json::to_value(self.preset.config()).expect("configs serialize");
        if let Some(path) = &self.config {
            merge(&mut value, read_json(path)?);
        }
        let mut c: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| fudnn::Error::Config(format!("experiment configuration: {e}")))?;
        if let Some(v) = self.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.variant {
            c.variant = v;
        }
        if let Some(v) = self.classes {
            c.class_set = v.try_into()?;
        }
        if let Some(v) = self.folds {
            c.folds = v;
        }
        if let Some(v) = self.lr {
            c.train.adam.lr = v;
        }
        if let Some(v) = self.batch_size {
            c.train.batch_size = v;
        }
        if let Some(v) = self.window {
            c.window_s = v;
        }
        if let Some(v) = self.overlap {
            c.overlap = v;
        }
        if self.shuffle_labels {
            c.shuffle_labels = true;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parses `low:high` in hertz.
pub fn parse_band(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LOW:HIGH, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("band {lo}:{hi} must satisfy LOW < HIGH"));
    }
    Ok([lo, hi])
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    #[test]
    fn merge_is_recursive() {
        let mut base = json!({"a": 1, "b": {"c": 2, "d": 3}});
        merge(&mut base, json!({"b": {"c": 5}, "e": [1]}));
        assert_eq!(base, json!({"a": 1, "b": {"c": 5, "d": 3}, "e": [1]}));
    }

    #[test]
    fn band_parsing() {
        assert_eq!(parse_band("0.5:13").unwrap(), [0.5, 13.0]);
        assert!(parse_band("13:0.5").is_err());
        assert!(parse_band("8").is_err());
    }
}

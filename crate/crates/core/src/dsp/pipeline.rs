use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fir::{design_fir_bandpass, filtfilt, FirFilter};
use super::resample::downsample_matrix;
use crate::eeg::{ChannelMatrix, Dataset, Trial};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_rate_hz: f64,
    pub band_hz: [f64; 2],
    pub order: usize,
    pub window_s: f64,
    pub overlap: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_rate_hz: 250.0,
            band_hz: [0.5, 13.0],
            order: 30,
            window_s: 2.0,
            overlap: 0.5,
        }
    }
}

impl PreprocessConfig {
    pub fn filter(&self) -> Result<FirFilter> {
        design_fir_bandpass(self.order, self.band_hz[0], self.band_hz[1], self.target_rate_hz)
    }
}

/// Zero-phase filters every channel.
pub fn filter_matrix(data: &ChannelMatrix, filter: &FirFilter) -> Result<ChannelMatrix> {
    let rows = (0..data.n_channels())
        .into_par_iter()
        .map(|c| filtfilt(&data.row_f64(c), filter))
        .collect::<Result<Vec<_>>>()?;
    ChannelMatrix::from_rows_f64(&rows)
}

/// Downsamples (if needed) and band-passes every trial. Windowing is left to
/// the caller so that trials can be split before they are cut.
pub fn preprocess_dataset(dataset: &Dataset, config: &PreprocessConfig) -> Result<Dataset> {
    let filter = config.filter()?;
    let trials = dataset
        .trials
        .par_iter()
        .map(|trial| {
            let data = downsample_matrix(&trial.data, trial.rate_hz, config.target_rate_hz)?;
            let data = filter_matrix(&data, &filter)?;
            if !data.all_finite() {
                return Err(Error::Numeric(format!("trial {} became non-finite", trial.trial_id)));
            }
            Ok(Trial {
                data,
                rate_hz: config.target_rate_hz,
                ..trial.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(dataset.subject_id.clone(), dataset.montage.clone(), config.target_rate_hz, trials)
}

use crate::eeg::{Dataset, Trial, Window, WindowSet};
use crate::error::{Error, Result};

/// Window length and hop, in samples, for a given rate.
pub fn window_geometry(rate_hz: f64, window_s: f64, overlap: f64) -> Result<(usize, usize)> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Config(format!("overlap {overlap} must lie in [0, 1)")));
    }
    let width = (window_s * rate_hz).round() as usize;
    if width == 0 {
        return Err(Error::Config(format!("window of {window_s} s is empty at {rate_hz} Hz")));
    }
    let step = ((width as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    Ok((width, step))
}

/// Cuts a trial into windows of `window_s` seconds advancing by
/// `window_s × (1 − overlap)`; a trailing partial window is dropped.
pub fn sliding_windows(trial: &Trial, window_s: f64, overlap: f64) -> Result<Vec<Window>> {
    let (width, step) = window_geometry(trial.rate_hz, window_s, overlap)?;
    let n = trial.n_samples();
    if width > n {
        return Err(Error::Range(format!(
            "{width}-sample window does not fit trial {} of {n} samples",
            trial.trial_id
        )));
    }
    let count = (n - width) / step + 1;
    (0..count)
        .map(|i| {
            let start = i * step;
            Ok(Window {
                subject_id: trial.subject_id.clone(),
                trial_id: trial.trial_id,
                index: i as u32,
                start,
                label: trial.label,
                data: trial.data.slice_samples(start, width)?,
            })
        })
        .collect()
}

/// Windows of every trial, in trial order.
pub fn dataset_windows(dataset: &Dataset, window_s: f64, overlap: f64) -> Result<WindowSet> {
    let mut windows = Vec::new();
    for trial in &dataset.trials {
        windows.extend(sliding_windows(trial, window_s, overlap)?);
    }
    Ok(WindowSet {
        subject_id: dataset.subject_id.clone(),
        montage: dataset.montage.clone(),
        rate_hz: dataset.rate_hz,
        windows,
    })
}

use super::fir::{design_fir_lowpass, filtfilt};
use crate::eeg::{ChannelMatrix, Marker, Recording};
use crate::error::{Error, Result};

/// Integer decimation factor between two rates.
pub fn decimation_factor(rate_hz: f64, target_hz: f64) -> Result<usize> {
    if !(rate_hz > 0.0 && target_hz > 0.0) {
        return Err(Error::Config("sampling rates must be positive".into()));
    }
    let ratio = rate_hz / target_hz;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-9 * ratio {
        return Err(Error::Config(format!(
            "{rate_hz} Hz to {target_hz} Hz is not a positive integer decimation"
        )));
    }
    Ok(factor as usize)
}

/// Anti-alias filters (cutoff `0.45 × target`) every channel and keeps every
/// `factor`-th sample.
pub fn downsample_matrix(data: &ChannelMatrix, rate_hz: f64, target_hz: f64) -> Result<ChannelMatrix> {
    let factor = decimation_factor(rate_hz, target_hz)?;
    if factor == 1 {
        return Ok(data.clone());
    }
    let filter = design_fir_lowpass(32 * factor, 0.45 * target_hz, rate_hz)?;
    let rows = data
        .rows_f64()
        .iter()
        .map(|row| {
            let smooth = filtfilt(row, &filter)?;
            Ok(smooth.into_iter().step_by(factor).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    ChannelMatrix::from_rows_f64(&rows)
}

/// Downsamples a recording; marker positions are divided by the factor.
pub fn downsample(recording: &Recording, target_hz: f64) -> Result<Recording> {
    let factor = decimation_factor(recording.rate_hz, target_hz)?;
    let samples = downsample_matrix(&recording.samples, recording.rate_hz, target_hz)?;
    let markers = recording
        .markers
        .iter()
        .map(|m| Marker {
            sample: m.sample / factor,
            code: m.code,
        })
        .collect();
    Ok(Recording::new(
        recording.montage.clone(),
        target_hz,
        recording.subject_id.clone(),
        samples,
        markers,
    )?
    .with_label_map(recording.label_map.clone()))
}

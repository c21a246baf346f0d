use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirWindow {
    Hamming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirKind {
    Lowpass,
    Bandpass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirDesign {
    pub window: FirWindow,
    pub kind: FirKind,
    /// Pass band in Hz; the lower edge is 0 for a low-pass.
    pub band: [f64; 2],
    pub rate_hz: f64,
    pub order: usize,
}

/// A linear-phase FIR filter with `order + 1` symmetric taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    design: FirDesign,
}

impl FirFilter {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn design(&self) -> &FirDesign {
        &self.design
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `H(f) = Σ tapₖ e^{-j2πfk/rate}`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = -2.0 * PI * freq_hz / self.design.rate_hz;
        self.taps
            .iter()
            .enumerate()
            .map(|(k, &h)| Complex64::from_polar(h, w * k as f64))
            .sum()
    }

    pub fn gain(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }
}

fn hamming(n_taps: usize) -> Vec<f64> {
    let n = (n_taps - 1) as f64;
    (0..n_taps)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n).cos())
        .collect()
}

/// Hamming-windowed ideal low-pass scaled to unit DC gain. Only the first half
/// is computed; the second is mirrored so the taps are exactly symmetric.
fn unit_dc_lowpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Vec<f64> {
    let n_taps = order + 1;
    let mid = order / 2;
    let window = hamming(n_taps);
    let fc = cutoff_hz / rate_hz;
    let mut taps = vec![0.0; n_taps];
    for i in 0..=mid {
        let x = i as f64 - mid as f64;
        let ideal = if x == 0.0 {
            2.0 * fc
        } else {
            (2.0 * PI * fc * x).sin() / (PI * x)
        };
        taps[i] = ideal * window[i];
        taps[order - i] = taps[i];
    }
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    taps
}

fn check_order(order: usize) -> Result<()> {
    if order < 2 || order % 2 != 0 {
        return Err(Error::Design(format!("order {order} must be even and at least 2")));
    }
    Ok(())
}

/// Windowed-sinc band-pass with a Hamming window.
///
/// The taps are the difference of two unit-DC low-passes at `high_hz` and
/// `low_hz`, so the response at 0 Hz is exactly zero. The result is scaled to
/// unit peak gain inside the pass band.
pub fn design_fir_bandpass(order: usize, low_hz: f64, high_hz: f64, rate_hz: f64) -> Result<FirFilter> {
    check_order(order)?;
    if !(rate_hz > 0.0 && low_hz > 0.0 && low_hz < high_hz && high_hz < rate_hz / 2.0) {
        return Err(Error::Design(format!(
            "band {low_hz}-{high_hz} Hz must satisfy 0 < low < high < {} Hz",
            rate_hz / 2.0
        )));
    }
    let hi = unit_dc_lowpass(order, high_hz, rate_hz);
    let lo = unit_dc_lowpass(order, low_hz, rate_hz);
    let mut filter = FirFilter {
        taps: hi.iter().zip(&lo).map(|(a, b)| a - b).collect(),
        design: FirDesign {
            window: FirWindow::Hamming,
            kind: FirKind::Bandpass,
            band: [low_hz, high_hz],
            rate_hz,
            order,
        },
    };
    let grid = 256;
    let peak = (0..=grid)
        .map(|i| filter.gain(low_hz + (high_hz - low_hz) * i as f64 / grid as f64))
        .fold(0.0, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Design("band-pass has no gain in its pass band".into()));
    }
    filter.taps.iter_mut().for_each(|t| *t /= peak);
    Ok(filter)
}

/// Hamming-windowed low-pass with unit DC gain.
pub fn design_fir_lowpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Result<FirFilter> {
    check_order(order)?;
    if !(rate_hz > 0.0 && cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0) {
        return Err(Error::Design(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            rate_hz / 2.0
        )));
    }
    Ok(FirFilter {
        taps: unit_dc_lowpass(order, cutoff_hz, rate_hz),
        design: FirDesign {
            window: FirWindow::Hamming,
            kind: FirKind::Lowpass,
            band: [0.0, cutoff_hz],
            rate_hz,
            order,
        },
    })
}

/// Causal convolution with zero initial state, output as long as the input.
fn convolve_causal(x: &[f64], taps: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            taps.iter()
                .take(n + 1)
                .enumerate()
                .map(|(k, &h)| h * x[n - k])
                .sum()
        })
        .collect()
}

/// Zero-phase filtering: forward pass, time reversal, second pass, reversal.
///
/// Both ends are extended by odd reflection over `3 × taps` samples, which
/// absorbs the start-up transients of each pass. The effective response is
/// `|H(f)|²` with no phase shift.
pub fn filtfilt(signal: &[f64], filter: &FirFilter) -> Result<Vec<f64>> {
    let pad = 3 * filter.len();
    let n = signal.len();
    if n <= pad {
        return Err(Error::Length(format!(
            "signal of {n} samples is too short for zero-phase filtering with {} taps (needs more than {pad})",
            filter.len()
        )));
    }
    let first = signal[0];
    let last = signal[n - 1];
    let mut padded = Vec::with_capacity(n + 2 * pad);
    padded.extend((0..pad).map(|i| 2.0 * first - signal[pad - i]));
    padded.extend_from_slice(signal);
    padded.extend((0..pad).map(|i| 2.0 * last - signal[n - 2 - i]));

    let mut y = convolve_causal(&padded, filter.taps());
    y.reverse();
    let mut y = convolve_causal(&y, filter.taps());
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const MIN_PHASE_SAMPLES: usize = 8;

/// Phase and envelope of the analytic signal.
#[derive(Debug, Clone, PartialEq)]
pub struct InstantaneousPhase {
    /// Radians in `(−π, π]`.
    pub phase: Vec<f64>,
    pub amplitude: Vec<f64>,
}

impl InstantaneousPhase {
    /// True when the envelope is zero everywhere, i.e. the phase carries no
    /// information and must not enter a phase-locking estimate.
    pub fn is_degenerate(&self) -> bool {
        self.amplitude.iter().all(|&a| a == 0.0)
    }
}

/// Reusable analytic-signal transform for one signal length.
pub struct PhaseExtractor {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buffer: Vec<Complex64>,
}

impl PhaseExtractor {
    pub fn new(len: usize) -> Result<Self> {
        if len < MIN_PHASE_SAMPLES {
            return Err(Error::Length(format!(
                "phase extraction needs at least {MIN_PHASE_SAMPLES} samples, got {len}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(PhaseExtractor {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            buffer: vec![Complex64::default(); len],
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Analytic signal `x + j·H{x}`: negative frequencies zeroed, positive ones
    /// doubled, DC and Nyquist kept.
    pub fn analytic(&mut self, signal: &[f64]) -> Result<&[Complex64]> {
        if signal.len() != self.len {
            return Err(Error::Length(format!(
                "extractor planned for {} samples, got {}",
                self.len,
                signal.len()
            )));
        }
        for (b, &x) in self.buffer.iter_mut().zip(signal) {
            *b = Complex64::new(x, 0.0);
        }
        self.forward.process(&mut self.buffer);
        let n = self.len;
        let half = n / 2;
        let scale = 1.0 / n as f64;
        for (k, b) in self.buffer.iter_mut().enumerate() {
            let gain = if k == 0 || (n % 2 == 0 && k == half) {
                1.0
            } else if k <= (n - 1) / 2 {
                2.0
            } else {
                0.0
            };
            *b *= gain * scale;
        }
        self.inverse.process(&mut self.buffer);
        Ok(&self.buffer)
    }

    pub fn phase(&mut self, signal: &[f64]) -> Result<InstantaneousPhase> {
        let z = self.analytic(signal)?;
        Ok(InstantaneousPhase {
            phase: z.iter().map(|c| wrap_phase(c.im.atan2(c.re))).collect(),
            amplitude: z.iter().map(|c| c.norm()).collect(),
        })
    }

    /// Unit phasors `e^{jφ(t)}`, or `None` when the signal is degenerate.
    pub fn phasors(&mut self, signal: &[f64]) -> Result<Option<Vec<Complex64>>> {
        let z = self.analytic(signal)?;
        if z.iter().all(|c| c.norm() == 0.0) {
            return Ok(None);
        }
        Ok(Some(
            z.iter()
                .map(|c| {
                    let phi = c.im.atan2(c.re);
                    Complex64::new(phi.cos(), phi.sin())
                })
                .collect(),
        ))
    }
}

/// Maps `−π` onto `π` so phases lie in `(−π, π]`.
fn wrap_phase(phi: f64) -> f64 {
    if phi <= -PI {
        phi + 2.0 * PI
    } else {
        phi
    }
}

/// Instantaneous phase of a real signal via its FFT-based analytic signal.
pub fn instantaneous_phase(signal: &[f64]) -> Result<InstantaneousPhase> {
    PhaseExtractor::new(signal.len())?.phase(signal)
}

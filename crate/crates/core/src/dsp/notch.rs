use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Second-order IIR notch (direct form II transposed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Notch {
    b: [f64; 3],
    a: [f64; 3],
}

impl Notch {
    /// Notch at `center_hz` whose -3 dB band is `width_hz` wide.
    pub fn design(center_hz: f64, width_hz: f64, rate_hz: f64) -> Result<Self> {
        if !(center_hz > 0.0 && center_hz < rate_hz / 2.0) {
            return Err(Error::Design(format!(
                "notch at {center_hz} Hz needs a rate above {} Hz, got {rate_hz}",
                2.0 * center_hz
            )));
        }
        if !(width_hz > 0.0 && width_hz < center_hz) {
            return Err(Error::Design(format!("notch width {width_hz} Hz is invalid")));
        }
        let w0 = 2.0 * PI * center_hz / rate_hz;
        let bw = 2.0 * PI * width_hz / rate_hz;
        let gain = 1.0 / (1.0 + (bw / 2.0).tan());
        let c = w0.cos();
        Ok(Notch {
            b: [gain, -2.0 * gain * c, gain],
            a: [1.0, -2.0 * gain * c, 2.0 * gain - 1.0],
        })
    }

    pub fn coefficients(&self) -> ([f64; 3], [f64; 3]) {
        (self.b, self.a)
    }

    pub fn gain(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / rate_hz;
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
            let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
            (re * re + im * im).sqrt()
        };
        eval(&self.b) / eval(&self.a)
    }

    pub fn apply(&self, signal: &[f64]) -> Vec<f64> {
        let (b, a) = (self.b, self.a);
        let (mut z1, mut z2) = (0.0, 0.0);
        signal
            .iter()
            .map(|&x| {
                let y = b[0] * x + z1;
                z1 = b[1] * x - a[1] * y + z2;
                z2 = b[2] * x - a[2] * y;
                y
            })
            .collect()
    }
}

/// Mains-interference notch at 60 Hz with a 2 Hz stop band.
pub fn notch_60hz(signal: &[f64], rate_hz: f64) -> Result<Vec<f64>> {
    if rate_hz <= 120.0 {
        return Err(Error::Design(format!("a 60 Hz notch needs a rate above 120 Hz, got {rate_hz}")));
    }
    Ok(Notch::design(60.0, 2.0, rate_hz)?.apply(signal))
}

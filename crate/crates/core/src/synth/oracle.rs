//! Reference classifier that knows the generative model.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{pink_gains, resolve, stream, synth_trial, SynthSpec};
use crate::error::{Error, Result};

/// Frequency range summed into one band-power feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureBand {
    pub low_hz: f64,
    pub high_hz: f64,
}

/// Margin added on both sides of a carrier band so spectral leakage from
/// carriers near the edges is still counted.
const MARGIN_HZ: f64 = 1.0;

/// FFT bins `k` with `low ≤ k·rate/n ≤ high`, excluding DC and Nyquist.
fn bins(band: FeatureBand, n: usize, rate_hz: f64) -> std::ops::Range<usize> {
    let res = rate_hz / n as f64;
    let lo = ((band.low_hz / res).ceil() as usize).max(1);
    let hi = ((band.high_hz / res).floor() as usize).min((n - 1) / 2);
    lo..hi.max(lo - 1) + 1
}

/// Mean-square power of every row inside every band, band-major:
/// `(2 / n²) Σ_k |X_k|²`, so a unit sinusoid inside the band scores ½.
pub fn band_power_features(rows: &[Vec<f64>], rate_hz: f64, bands: &[FeatureBand]) -> Vec<f64> {
    let n = rows.first().map_or(0, Vec::len);
    if n == 0 {
        return Vec::new();
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    features_with(&fft, rows, rate_hz, bands)
}

fn features_with(fft: &Arc<dyn Fft<f64>>, rows: &[Vec<f64>], rate_hz: f64, bands: &[FeatureBand]) -> Vec<f64> {
    let n = rows[0].len();
    let spectra: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut buf: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft.process(&mut buf);
            buf.iter().map(|c| c.norm_sqr()).collect()
        })
        .collect();
    let scale = 2.0 / (n as f64 * n as f64);
    bands
        .iter()
        .flat_map(|&b| {
            let k = bins(b, n, rate_hz);
            spectra.iter().map(move |s| scale * s[k.clone()].iter().sum::<f64>())
        })
        .collect()
}

/// Distinct carrier bands of the `SynthSpec`, widened by the leakage margin.
fn feature_bands(spec: &SynthSpec) -> Vec<FeatureBand> {
    let mut out: Vec<FeatureBand> = Vec::new();
    for c in &spec.classes {
        for s in &c.sources {
            let [lo, hi] = s.band.range_hz();
            let b = FeatureBand { low_hz: (lo - MARGIN_HZ).max(0.0), high_hz: hi + MARGIN_HZ };
            if !out.contains(&b) {
                out.push(b);
            }
        }
    }
    out
}

/// Expected feature vector of each class under the generative model.
fn templates(spec: &SynthSpec, bands: &[FeatureBand]) -> Result<Vec<Vec<f64>>> {
    let n = spec.n_samples();
    let k = spec.n_channels;
    let pink = pink_gains(n);
    let resolved = resolve(spec)?;
    let gain_sq = 1.0 + spec.subject_jitter_sd.powi(2);
    let noise: Vec<f64> = bands
        .iter()
        .map(|&b| {
            let sum: f64 = bins(b, n, spec.rate_hz)
                .map(|i| if spec.pink_noise { pink[i].powi(2) } else { 1.0 })
                .sum();
            2.0 * spec.noise_sd.powi(2) * sum / n as f64
        })
        .collect();
    Ok(resolved
        .iter()
        .map(|sources| {
            let mut t: Vec<f64> = bands.iter().zip(&noise).flat_map(|(_, &p)| std::iter::repeat_n(p, k)).collect();
            for src in sources {
                let bi = bands
                    .iter()
                    .position(|b| b.low_hz <= src.band[0] && src.band[1] <= b.high_hz)
                    .expect("every source band has a feature band");
                for &ch in &src.channels {
                    t[bi * k + ch] += src.amplitude.powi(2) / 2.0 * gain_sq;
                }
            }
            t
        })
        .collect())
}

/// Accuracy of a nearest-template band-power classifier on `n_draws`
/// Monte-Carlo trials (classes in rotation, fresh subject gains per draw).
///
/// Templates are the exact expected features, so the result estimates how
/// separable a `SynthSpec` is for a decoder that knows where and at which
/// frequency to look. Ties go to the first class.
pub fn oracle_separability(spec: &SynthSpec, n_draws: usize, seed: u64) -> Result<f64> {
    spec.validate()?;
    if n_draws == 0 {
        return Err(Error::Config("at least one Monte-Carlo draw is required".into()));
    }
    let bands = feature_bands(spec);
    let templates = templates(spec, &bands)?;
    let resolved = resolve(spec)?;
    let n_classes = spec.classes.len();
    let fft = FftPlanner::new().plan_fft_forward(spec.n_samples());
    let correct: usize = (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let class = i % n_classes;
            let mut rng = stream(seed, usize::from(u16::MAX), i as u64);
            let gains: Vec<f64> = (0..spec.n_channels)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (1.0 + spec.subject_jitter_sd * z).max(0.0)
                })
                .collect();
            let rows = synth_trial(spec, &resolved[class], &gains, &mut rng);
            let f = features_with(&fft, &rows, spec.rate_hz, &bands);
            let mut best = (0, f64::INFINITY);
            for (c, t) in templates.iter().enumerate() {
                let d: f64 = f.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.1 {
                    best = (c, d);
                }
            }
            usize::from(best.0 == class)
        })
        .sum();
    Ok(correct as f64 / n_draws as f64)
}

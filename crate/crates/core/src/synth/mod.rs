//! Ground-truth synthetic EEG: class-specific groups of channels share one
//! oscillation on top of independent noise.
//!
//! ```
//! use fudnn::synth::{generate, SynthSpec};
//!
//! let spec = SynthSpec { n_trials_per_class: 2, ..SynthSpec::default() };
//! let subjects = generate(&spec).unwrap();
//! assert_eq!(subjects.len(), 1);
//! assert_eq!(subjects[0].trials.len(), 8);
//! assert_eq!(subjects[0].trials[0].data.n_samples(), 1250);
//! ```

mod oracle;

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use oracle::{band_power_features, oracle_separability, FeatureBand};

use crate::eeg::{ChannelMatrix, ClassLabel, Dataset, Montage, Trial};
use crate::error::{Error, Result};

/// Frequency band of a source oscillation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarrierBand {
    /// 0.5–4 Hz.
    Delta,
    /// 8–13 Hz.
    Alpha,
}

impl CarrierBand {
    pub fn range_hz(self) -> [f64; 2] {
        match self {
            CarrierBand::Delta => [0.5, 4.0],
            CarrierBand::Alpha => [8.0, 13.0],
        }
    }
}

/// One shared oscillation driving a group of channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub channels: Vec<String>,
    pub band: CarrierBand,
    /// Scales the shared oscillation; 0 leaves only noise on the group.
    pub coupling: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub label: ClassLabel,
    pub sources: Vec<SourceSpec>,
}

/// Everything needed to regenerate a synthetic study bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub n_trials_per_class: usize,
    pub rate_hz: f64,
    pub duration_s: f64,
    /// 64 selects the standard cap; any other count uses `Ch1..ChK`.
    pub n_channels: usize,
    pub classes: Vec<ClassSpec>,
    pub noise_sd: f64,
    /// 1/f instead of white background noise.
    pub pink_noise: bool,
    /// Relative sd of each subject's per-channel source gains.
    pub subject_jitter_sd: f64,
    pub seed: u64,
}

fn group(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn alpha(channels: Vec<String>) -> Vec<SourceSpec> {
    vec![SourceSpec { channels, band: CarrierBand::Alpha, coupling: 1.0, amplitude: 1.0 }]
}

impl Default for SynthSpec {
    /// Four classes, one subject, 50 trials per class, high SNR. Each class
    /// drives a different scalp region at alpha.
    fn default() -> Self {
        SynthSpec {
            n_subjects: 1,
            n_trials_per_class: 50,
            rate_hz: 250.0,
            duration_s: 5.0,
            n_channels: 64,
            classes: vec![
                ClassSpec { label: ClassLabel::PP, sources: alpha(Self::frontal()) },
                ClassSpec { label: ClassLabel::PW, sources: alpha(Self::occipital()) },
                ClassSpec { label: ClassLabel::OD, sources: alpha(Self::left_centroparietal()) },
                ClassSpec { label: ClassLabel::EF, sources: alpha(Self::right_centroparietal()) },
            ],
            noise_sd: 1.0,
            pink_noise: false,
            subject_jitter_sd: 0.1,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn frontal() -> Vec<String> {
        group(&["AF3", "AFz", "AF4", "F3", "F1", "Fz", "F2", "F4"])
    }

    pub fn occipital() -> Vec<String> {
        group(&["PO7", "PO3", "POz", "PO4", "PO8", "O1", "Oz", "O2"])
    }

    pub fn left_centroparietal() -> Vec<String> {
        group(&["C5", "C3", "C1", "CP5", "CP3", "CP1", "P5", "P3"])
    }

    pub fn right_centroparietal() -> Vec<String> {
        group(&["C2", "C4", "C6", "CP2", "CP4", "CP6", "P4", "P6"])
    }

    pub fn montage(&self) -> Result<Montage> {
        if self.n_channels == 64 {
            Ok(Montage::default())
        } else {
            Montage::numbered(self.n_channels)
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.classes.iter().map(|c| c.label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_subjects == 0 || self.n_trials_per_class == 0 {
            return bad("at least one subject and one trial per class are required".into());
        }
        if !(self.rate_hz > 0.0 && self.duration_s > 0.0) || self.n_samples() < 16 {
            return bad(format!("{} s at {} Hz is too short", self.duration_s, self.rate_hz));
        }
        if self.classes.is_empty() {
            return bad("no classes defined".into());
        }
        let mut seen = Vec::new();
        for c in &self.classes {
            if seen.contains(&c.label) {
                return bad(format!("class {} defined twice", c.label));
            }
            seen.push(c.label);
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise sd {} must be finite and non-negative", self.noise_sd));
        }
        if !(self.subject_jitter_sd >= 0.0 && self.subject_jitter_sd.is_finite()) {
            return bad(format!("jitter sd {} must be finite and non-negative", self.subject_jitter_sd));
        }
        let montage = self.montage()?;
        for c in &self.classes {
            for s in &c.sources {
                if !(0.0..=1.0).contains(&s.coupling) {
                    return bad(format!("coupling {} of class {} lies outside [0, 1]", s.coupling, c.label));
                }
                if !(s.amplitude >= 0.0 && s.amplitude.is_finite()) {
                    return bad(format!("amplitude {} of class {} is invalid", s.amplitude, c.label));
                }
                if s.channels.is_empty() {
                    return bad(format!("a source of class {} has no channels", c.label));
                }
                montage.indices_of(&s.channels).map_err(|e| Error::Config(e.to_string()))?;
                if s.band.range_hz()[1] >= self.rate_hz / 2.0 {
                    return bad(format!("{:?} band exceeds the Nyquist frequency", s.band));
                }
            }
        }
        Ok(())
    }
}

/// Source groups resolved to channel indices.
pub(crate) struct ResolvedSource {
    pub channels: Vec<usize>,
    pub band: [f64; 2],
    pub amplitude: f64,
}

pub(crate) fn resolve(spec: &SynthSpec) -> Result<Vec<Vec<ResolvedSource>>> {
    let montage = spec.montage()?;
    spec.classes
        .iter()
        .map(|c| {
            c.sources
                .iter()
                .map(|s| {
                    Ok(ResolvedSource {
                        channels: montage.indices_of(&s.channels)?,
                        band: s.band.range_hz(),
                        amplitude: s.amplitude * s.coupling,
                    })
                })
                .collect()
        })
        .collect()
}

/// RNG for one `(subject, item)` pair: the `SynthSpec` seed with its own stream.
pub(crate) fn stream(seed: u64, subject: usize, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((subject as u64) << 32) ^ item);
    rng
}

const GAIN_STREAM: u64 = u32::MAX as u64;

/// Per-channel source gains of one subject, `max(0, 1 + jitter·z)`.
pub(crate) fn subject_gains(spec: &SynthSpec, subject: usize) -> Vec<f64> {
    let mut rng = stream(spec.seed, subject, GAIN_STREAM);
    (0..spec.n_channels)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (1.0 + spec.subject_jitter_sd * z).max(0.0)
        })
        .collect()
}

/// Background noise with standard deviation `sd`, white or 1/f.
pub(crate) fn noise<R: Rng>(n: usize, sd: f64, pink: bool, rng: &mut R) -> Vec<f64> {
    let white: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z
        })
        .collect();
    if !pink || sd == 0.0 {
        return white.into_iter().map(|z| sd * z).collect();
    }
    // Shape the white spectrum by 1/√f (power 1/f); the gains are scaled so
    // the expected variance stays sd².
    let mut buf: Vec<Complex64> = white.iter().map(|&z| Complex64::new(z, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let gains = pink_gains(n);
    for (k, b) in buf.iter_mut().enumerate() {
        *b *= gains[k.min(n - k)];
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| sd * c.re / n as f64).collect()
}

/// Spectral gains indexed by `min(k, n − k)`; zero at DC, mean square one.
pub(crate) fn pink_gains(n: usize) -> Vec<f64> {
    let half = n / 2;
    let raw: Vec<f64> = (0..=half).map(|k| if k == 0 { 0.0 } else { 1.0 / (k as f64).sqrt() }).collect();
    let total: f64 = (0..n).map(|k| raw[k.min(n - k)].powi(2)).sum();
    let scale = (n as f64 / total).sqrt();
    raw.into_iter().map(|g| g * scale).collect()
}

/// One trial of class `class` for a subject with channel gains `gains`.
pub(crate) fn synth_trial<R: Rng>(
    spec: &SynthSpec,
    sources: &[ResolvedSource],
    gains: &[f64],
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let n = spec.n_samples();
    let mut rows: Vec<Vec<f64>> = (0..spec.n_channels)
        .map(|_| noise(n, spec.noise_sd, spec.pink_noise, rng))
        .collect();
    for src in sources {
        let freq = rng.random_range(src.band[0]..=src.band[1]);
        let phase = rng.random_range(0.0..TAU);
        let wave: Vec<f64> =
            (0..n).map(|i| src.amplitude * (TAU * freq * i as f64 / spec.rate_hz + phase).cos()).collect();
        for &ch in &src.channels {
            let g = gains[ch];
            for (v, w) in rows[ch].iter_mut().zip(&wave) {
                *v += g * w;
            }
        }
    }
    rows
}

/// Generates one dataset per subject. Trials cycle through the classes in
/// spec order and each draws from its own RNG stream, so the output does not
/// depend on thread scheduling.
pub fn generate(spec: &SynthSpec) -> Result<Vec<Dataset>> {
    spec.validate()?;
    let resolved = resolve(spec)?;
    let montage = spec.montage()?;
    let n_classes = spec.classes.len();
    let n_trials = n_classes * spec.n_trials_per_class;
    (0..spec.n_subjects)
        .map(|subject| {
            let subject_id = format!("S{:02}", subject + 1);
            let gains = subject_gains(spec, subject);
            let trials = (0..n_trials)
                .into_par_iter()
                .map(|t| {
                    let class = t % n_classes;
                    let mut rng = stream(spec.seed, subject, t as u64);
                    let rows = synth_trial(spec, &resolved[class], &gains, &mut rng);
                    Ok(Trial {
                        label: spec.classes[class].label,
                        data: ChannelMatrix::from_rows_f64(&rows)?,
                        rate_hz: spec.rate_hz,
                        subject_id: subject_id.clone(),
                        trial_id: t as u32,
                        // imagery is simulated over the whole trial
                        t_start_s: 0.0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Dataset::new(subject_id, montage.clone(), spec.rate_hz, trials)
        })
        .collect()
}

use std::f64::consts::PI;
use std::io::Write;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::eeg::Trial;
use crate::error::{Error, Result};

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs_hz: Vec<f64>,
    /// One-sided density in units²/Hz.
    pub power: Vec<f64>,
}

impl Psd {
    /// Integral of the density, i.e. the signal's mean power.
    pub fn total_power(&self) -> f64 {
        let df = self.freqs_hz.get(1).copied().unwrap_or(0.0) - self.freqs_hz[0];
        self.power.iter().sum::<f64>() * df
    }

    pub fn peak_frequency(&self) -> f64 {
        let (i, _) = self
            .power
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
        self.freqs_hz[i]
    }
}

/// Welch estimate: Hann-windowed, mean-removed segments of `seg_len` samples
/// overlapping by `overlap`, averaged periodograms scaled to a one-sided
/// density.
pub fn psd_welch(signal: &[f64], rate_hz: f64, seg_len: usize, overlap: f64) -> Result<Psd> {
    if seg_len < 2 || seg_len > signal.len() {
        return Err(Error::Length(format!(
            "segment of {seg_len} samples does not fit a {}-sample signal",
            signal.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Config(format!("overlap {overlap} must lie in [0, 1)")));
    }
    let step = ((seg_len as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let n_segments = (signal.len() - seg_len) / step + 1;
    let window = hann(seg_len);
    let window_energy: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let n_bins = seg_len / 2 + 1;
    let mut power = vec![0.0; n_bins];
    let mut buffer = vec![Complex64::default(); seg_len];
    for s in 0..n_segments {
        let seg = &signal[s * step..s * step + seg_len];
        let mean = seg.iter().sum::<f64>() / seg_len as f64;
        for ((b, &x), &w) in buffer.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buffer);
        for (p, b) in power.iter_mut().zip(&buffer) {
            *p += b.norm_sqr();
        }
    }
    let scale = 1.0 / (rate_hz * window_energy * n_segments as f64);
    for (k, p) in power.iter_mut().enumerate() {
        let one_sided = if k == 0 || (seg_len % 2 == 0 && k == seg_len / 2) { 1.0 } else { 2.0 };
        *p *= scale * one_sided;
    }
    Ok(Psd {
        freqs_hz: (0..n_bins).map(|k| k as f64 * rate_hz / seg_len as f64).collect(),
        power,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErspConfig {
    pub channel: usize,
    /// Baseline interval relative to onset, seconds.
    pub baseline_s: [f64; 2],
    pub freq_range_hz: [f64; 2],
    pub n_times: usize,
    /// Short-time FFT window length.
    pub window_s: f64,
}

impl Default for ErspConfig {
    fn default() -> Self {
        ErspConfig {
            channel: 0,
            baseline_s: [-0.5, 0.0],
            freq_range_hz: [0.5, 50.0],
            n_times: 400,
            window_s: 1.0,
        }
    }
}

/// Event-related spectral perturbation on a `[freqs × times]` grid, in dB
/// relative to the mean baseline power.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFreqMap {
    pub freqs_hz: Vec<f64>,
    pub times_s: Vec<f64>,
    /// Row-major `[freqs × times]`.
    pub values_db: Vec<f64>,
}

impl TimeFreqMap {
    pub fn value(&self, freq_index: usize, time_index: usize) -> f64 {
        self.values_db[freq_index * self.times_s.len() + time_index]
    }

    /// One row per frequency, one column per time point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["freq_hz".to_string()];
        header.extend(self.times_s.iter().map(|t| format!("{t:.6}")));
        w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
        for (fi, f) in self.freqs_hz.iter().enumerate() {
            let mut row = vec![format!("{f}")];
            row.extend((0..self.times_s.len()).map(|ti| format!("{:.6}", self.value(fi, ti))));
            w.write_record(&row).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Short-time FFT ERSP averaged over trials.
///
/// Frames of `window_s` seconds (Hann) advance by the largest hop that still
/// yields at least `n_times` frames; trial-averaged power is divided by the
/// mean power of frames centred inside the baseline, converted to dB, and
/// linearly resampled to exactly `n_times` points.
pub fn ersp(trials: &[Trial], config: &ErspConfig) -> Result<TimeFreqMap> {
    let first = trials
        .first()
        .ok_or_else(|| Error::Config("ERSP needs at least one trial".into()))?;
    let rate = first.rate_hz;
    let n = first.n_samples();
    let t0 = first.t_start_s;
    if trials
        .iter()
        .any(|t| t.n_samples() != n || t.rate_hz != rate || t.t_start_s != t0)
    {
        return Err(Error::Contract("ERSP trials must share length, rate and start time".into()));
    }
    if config.channel >= first.data.n_channels() {
        return Err(Error::Range(format!("channel {} out of range", config.channel)));
    }
    if config.n_times < 2 {
        return Err(Error::Config("ERSP needs at least 2 time points".into()));
    }
    let [b0, b1] = config.baseline_s;
    let t_end = t0 + n as f64 / rate;
    if t0 > b0 + 1e-9 || t_end < b1 || b0 >= b1 {
        return Err(Error::Range(format!(
            "trials span {t0}..{t_end} s and do not contain the baseline {b0}..{b1} s"
        )));
    }
    let width = (config.window_s * rate).round() as usize;
    if width < 2 || width > n {
        return Err(Error::Length(format!("{width}-sample frames do not fit {n}-sample trials")));
    }
    let span = n - width;
    let hop = (span / (config.n_times - 1)).max(1);
    let n_frames = span / hop + 1;
    let centers: Vec<f64> = (0..n_frames)
        .map(|f| t0 + (f * hop) as f64 / rate + width as f64 / (2.0 * rate))
        .collect();

    let [f_lo, f_hi] = config.freq_range_hz;
    let bins: Vec<usize> = (0..=width / 2)
        .filter(|&k| {
            let f = k as f64 * rate / width as f64;
            f >= f_lo && f <= f_hi
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::Config(format!("no frequency bins in {f_lo}..{f_hi} Hz")));
    }

    let window = hann(width);
    let fft = FftPlanner::new().plan_fft_forward(width);
    let mut buffer = vec![Complex64::default(); width];
    // power[bin][frame], summed over trials
    let mut power = vec![vec![0.0; n_frames]; bins.len()];
    for trial in trials {
        let x = trial.data.row_f64(config.channel);
        for (f, start) in (0..n_frames).map(|f| (f, f * hop)) {
            for ((b, &v), &w) in buffer.iter_mut().zip(&x[start..start + width]).zip(&window) {
                *b = Complex64::new(v * w, 0.0);
            }
            fft.process(&mut buffer);
            for (row, &k) in power.iter_mut().zip(&bins) {
                row[f] += buffer[k].norm_sqr();
            }
        }
    }

    let base_frames: Vec<usize> = (0..n_frames)
        .filter(|&f| centers[f] >= b0 - 1e-9 && centers[f] <= b1 + 1e-9)
        .collect();
    if base_frames.is_empty() {
        return Err(Error::Range(format!(
            "no {}-s frame is centred inside the baseline {b0}..{b1} s",
            config.window_s
        )));
    }

    let times: Vec<f64> = (0..config.n_times)
        .map(|i| {
            centers[0] + (centers[n_frames - 1] - centers[0]) * i as f64 / (config.n_times - 1) as f64
        })
        .collect();
    let mut values = Vec::with_capacity(bins.len() * config.n_times);
    for row in &power {
        let base = base_frames.iter().map(|&f| row[f]).sum::<f64>() / base_frames.len() as f64;
        if !(base > 0.0) {
            return Err(Error::Numeric("baseline power is zero".into()));
        }
        let db: Vec<f64> = row.iter().map(|&p| 10.0 * (p / base).log10()).collect();
        values.extend(times.iter().map(|&t| interpolate(&centers, &db, t)));
    }
    Ok(TimeFreqMap {
        freqs_hz: bins.iter().map(|&k| k as f64 * rate / width as f64).collect(),
        times_s: times,
        values_db: values,
    })
}

/// Piecewise-linear interpolation on an increasing grid.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.len() == 1 || x <= xs[0] {
        return ys[0];
    }
    let i = xs.partition_point(|&v| v <= x);
    if i >= xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let a = (x - x0) / (x1 - x0);
    ys[i - 1] * (1.0 - a) + ys[i] * a
}

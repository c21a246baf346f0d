use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::eeg::ChannelMatrix;
use crate::error::{Error, Result};
use crate::linalg::{MatMut, MatRef, Real};

/// Instantaneous phases `φ_k(t, n)` laid out `[trial][channel][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTensor {
    n_trials: usize,
    n_channels: usize,
    n_samples: usize,
    phases: Vec<f64>,
    pub rate_hz: f64,
    pub band_hz: [f64; 2],
    labels: Vec<String>,
    degenerate: Vec<bool>,
}

impl PhaseTensor {
    pub fn new(
        n_trials: usize,
        n_channels: usize,
        n_samples: usize,
        phases: Vec<f64>,
        rate_hz: f64,
        band_hz: [f64; 2],
    ) -> Result<Self> {
        if n_trials == 0 || n_channels == 0 || n_samples == 0 {
            return Err(Error::Shape("phase tensor needs N, K, T ≥ 1".into()));
        }
        if phases.len() != n_trials * n_channels * n_samples {
            return Err(Error::Shape(format!(
                "{} phases for a {n_trials}×{n_channels}×{n_samples} tensor",
                phases.len()
            )));
        }
        if let Some(p) = phases.iter().find(|p| !(**p > -PI && **p <= PI)) {
            return Err(Error::Range(format!("phase {p} outside (−π, π]")));
        }
        Ok(PhaseTensor {
            n_trials,
            n_channels,
            n_samples,
            phases,
            rate_hz,
            band_hz,
            labels: (1..=n_channels).map(|i| format!("ch{i}")).collect(),
            degenerate: vec![false; n_channels],
        })
    }

    /// Names used when reporting a channel.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_channels {
            return Err(Error::Shape(format!("{} labels for {} channels", labels.len(), self.n_channels)));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Marks a channel whose envelope vanished, so that PLV refuses it.
    pub fn mark_degenerate(&mut self, channel: usize) {
        self.degenerate[channel] = true;
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn series(&self, trial: usize, channel: usize) -> &[f64] {
        let start = (trial * self.n_channels + channel) * self.n_samples;
        &self.phases[start..start + self.n_samples]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlvKind {
    /// Only `k1 < k2` entries populated.
    UpperTriangular,
    Symmetric,
}

/// `K × K` phase-locking values. The diagonal (self-locking) is not stored
/// and reads as zero in both kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlvMatrix {
    n_channels: usize,
    values: Vec<f64>,
    kind: PlvKind,
}

impl PlvMatrix {
    pub fn new(n_channels: usize, values: Vec<f64>, kind: PlvKind) -> Result<Self> {
        if values.len() != n_channels * n_channels {
            return Err(Error::Shape(format!("{} values for a {n_channels}² matrix", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Range(format!("PLV entry {v} outside [0, 1]")));
        }
        let m = PlvMatrix { n_channels, values, kind };
        for i in 0..n_channels {
            if m.get(i, i) != 0.0 {
                return Err(Error::Contract("PLV diagonal must be empty".into()));
            }
            for j in 0..i {
                let bad = match kind {
                    PlvKind::UpperTriangular => m.get(i, j) != 0.0,
                    PlvKind::Symmetric => m.get(i, j) != m.get(j, i),
                };
                if bad {
                    return Err(Error::Contract(format!("entry ({i}, {j}) violates the {kind:?} layout")));
                }
            }
        }
        Ok(m)
    }

    pub fn zeros(n_channels: usize, kind: PlvKind) -> Self {
        PlvMatrix {
            n_channels,
            values: vec![0.0; n_channels * n_channels],
            kind,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn kind(&self) -> PlvKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_channels + j]
    }
}

/// Streaming estimate of Σ e^{j(φ_{k1} − φ_{k2})} over any number of
/// `K × T` phase blocks. The sums are formed with matrix products of the
/// cosine and sine planes.
#[derive(Debug, Clone)]
pub struct PlvAccumulator {
    n_channels: usize,
    re: Vec<f64>,
    cross: Vec<f64>,
    count: u64,
}

impl PlvAccumulator {
    pub fn new(n_channels: usize) -> Self {
        PlvAccumulator {
            n_channels,
            re: vec![0.0; n_channels * n_channels],
            cross: vec![0.0; n_channels * n_channels],
            count: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Adds unit phasors given as cosine and sine planes, each `K × len`
    /// channel-major.
    pub fn add_phasors(&mut self, cos: &[f64], sin: &[f64], len: usize) -> Result<()> {
        let k = self.n_channels;
        if cos.len() != k * len || sin.len() != k * len {
            return Err(Error::Shape(format!("phasor planes must be {k}×{len}")));
        }
        let c = MatRef::row_major(cos, k, len);
        let s = MatRef::row_major(sin, k, len);
        // Re = C Cᵀ + S Sᵀ;  Im = S Cᵀ − (S Cᵀ)ᵀ
        f64::gemm(1.0, c, c.t(), 1.0, MatMut::row_major(&mut self.re, k, k));
        f64::gemm(1.0, s, s.t(), 1.0, MatMut::row_major(&mut self.re, k, k));
        f64::gemm(1.0, s, c.t(), 1.0, MatMut::row_major(&mut self.cross, k, k));
        self.count += len as u64;
        Ok(())
    }

    /// Adds one `K × len` block of phases.
    pub fn add_phases(&mut self, phases: &[f64], len: usize) -> Result<()> {
        let cos: Vec<f64> = phases.iter().map(|p| p.cos()).collect();
        let sin: Vec<f64> = phases.iter().map(|p| p.sin()).collect();
        self.add_phasors(&cos, &sin, len)
    }

    /// Upper-triangular `|mean phasor|` over everything added so far.
    pub fn finish(&self) -> Result<PlvMatrix> {
        if self.count == 0 {
            return Err(Error::Length("no phases accumulated".into()));
        }
        let k = self.n_channels;
        let scale = 1.0 / self.count as f64;
        let mut out = PlvMatrix::zeros(k, PlvKind::UpperTriangular);
        for i in 0..k {
            for j in i + 1..k {
                let re = self.re[i * k + j] * scale;
                let im = (self.cross[i * k + j] - self.cross[j * k + i]) * scale;
                out.values[i * k + j] = re.hypot(im).min(1.0);
            }
        }
        Ok(out)
    }
}

/// Phase-locking value between every channel pair, averaged jointly over
/// time bins and trials.
pub fn plv_pairwise(phases: &PhaseTensor) -> Result<PlvMatrix> {
    if let Some(c) = phases.degenerate.iter().position(|&d| d) {
        return Err(Error::InvalidChannel {
            channel: phases.labels[c].clone(),
            reason: "zero amplitude, phase undefined".into(),
        });
    }
    let (k, t) = (phases.n_channels, phases.n_samples);
    let mut acc = PlvAccumulator::new(k);
    for n in 0..phases.n_trials {
        acc.add_phases(&phases.phases[n * k * t..(n + 1) * k * t], t)?;
    }
    acc.finish()
}

/// `S = P + Pᵀ` for an upper-triangular `P`.
pub fn symmetrize(plv: &PlvMatrix) -> Result<PlvMatrix> {
    if plv.kind != PlvKind::UpperTriangular {
        return Err(Error::Contract("symmetrize expects an upper-triangular matrix".into()));
    }
    let k = plv.n_channels;
    let mut out = PlvMatrix::zeros(k, PlvKind::Symmetric);
    for i in 0..k {
        for j in 0..k {
            if j < i && plv.get(i, j) != 0.0 || i == j && plv.get(i, i) != 0.0 {
                return Err(Error::Contract(format!("entry ({i}, {j}) lies outside the upper triangle")));
            }
            out.values[i * k + j] = plv.get(i, j) + plv.get(j, i);
        }
    }
    Ok(out)
}

/// Per-channel connectivity strength: column sums of `S` (equal to the row
/// sums by symmetry).
pub fn row_reduce(s: &PlvMatrix) -> Result<Vec<f64>> {
    if s.kind != PlvKind::Symmetric {
        return Err(Error::Contract("row_reduce expects a symmetric matrix".into()));
    }
    let k = s.n_channels;
    Ok((0..k).map(|j| (0..k).map(|i| s.get(i, j)).sum()).collect())
}

/// Per-channel input weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelWeights {
    w: Vec<f64>,
}

impl ChannelWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(v) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Range(format!("channel weight {v} outside [0, 1]")));
        }
        Ok(ChannelWeights { w })
    }

    pub fn ones(n_channels: usize) -> Self {
        ChannelWeights { w: vec![1.0; n_channels] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
}

/// `(v − min v) / (max v − min v)`; a constant vector maps to all ones.
pub fn minmax_normalize(v: &[f64]) -> Result<ChannelWeights> {
    if v.len() < 2 {
        return Err(Error::Length(format!("min-max normalization needs K ≥ 2, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite connectivity strength".into()));
    }
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(ChannelWeights::ones(v.len()));
    }
    let span = hi - lo;
    Ok(ChannelWeights {
        w: v.iter().map(|x| ((x - lo) / span).clamp(0.0, 1.0)).collect(),
    })
}

/// Scales channel `k` of every sample by `w[k]`.
pub fn apply_weights(window: &ChannelMatrix, weights: &ChannelWeights) -> Result<ChannelMatrix> {
    let mut out = window.clone();
    apply_weights_in_place(out.as_mut_slice(), window.n_channels(), weights)?;
    Ok(out)
}

/// In-place variant over a channel-major `K × T` buffer.
pub fn apply_weights_in_place(data: &mut [f32], n_channels: usize, weights: &ChannelWeights) -> Result<()> {
    if weights.len() != n_channels || n_channels == 0 || data.len() % n_channels != 0 {
        return Err(Error::Contract(format!(
            "{} weights for {n_channels} channels ({} samples)",
            weights.len(),
            data.len()
        )));
    }
    let t = data.len() / n_channels;
    for (row, &w) in data.chunks_exact_mut(t.max(1)).zip(&weights.w) {
        let w = w as f32;
        row.iter_mut().for_each(|x| *x *= w);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub k1: usize,
    pub k2: usize,
    pub value: f64,
}

/// Channel pairs (`k1 < k2`) with `S > threshold`, strongest first, ties by
/// index.
pub fn threshold_edges(s: &PlvMatrix, threshold: f64) -> Result<Vec<Edge>> {
    if s.kind != PlvKind::Symmetric {
        return Err(Error::Contract("threshold_edges expects a symmetric matrix".into()));
    }
    let k = s.n_channels;
    let mut edges: Vec<Edge> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .filter(|&(i, j)| s.get(i, j) > threshold)
        .map(|(k1, k2)| Edge { k1, k2, value: s.get(k1, k2) })
        .collect();
    edges.sort_by(|a, b| b.value.total_cmp(&a.value).then((a.k1, a.k2).cmp(&(b.k1, b.k2))));
    Ok(edges)
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Similarity of two subjects' weight profiles.
pub fn pearson_cc(a: &ChannelWeights, b: &ChannelWeights) -> Result<f64> {
    pearson(&a.w, &b.w)
}

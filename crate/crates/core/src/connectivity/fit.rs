use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plv::{
    minmax_normalize, row_reduce, symmetrize, ChannelWeights, Edge, PhaseTensor, PlvAccumulator, PlvMatrix,
};
use crate::dsp::{design_fir_bandpass, filtfilt, FirFilter, PhaseExtractor};
use crate::eeg::{ChannelMatrix, Montage, Window};
use crate::error::{Error, Result};

impl AsRef<ChannelMatrix> for Window {
    fn as_ref(&self) -> &ChannelMatrix {
        &self.data
    }
}

impl AsRef<ChannelMatrix> for ChannelMatrix {
    fn as_ref(&self) -> &ChannelMatrix {
        self
    }
}

/// Optional sub-band re-filtering before phase extraction. Without a band the
/// windows are assumed to be band-passed already.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlvOptions {
    pub band_hz: Option<[f64; 2]>,
    pub rate_hz: f64,
    pub order: usize,
}

impl Default for PlvOptions {
    fn default() -> Self {
        PlvOptions {
            band_hz: None,
            rate_hz: 250.0,
            order: 30,
        }
    }
}

impl PlvOptions {
    pub fn subband(low_hz: f64, high_hz: f64, rate_hz: f64) -> Self {
        PlvOptions {
            band_hz: Some([low_hz, high_hz]),
            rate_hz,
            order: 30,
        }
    }

    fn filter(&self) -> Result<Option<FirFilter>> {
        self.band_hz
            .map(|[lo, hi]| design_fir_bandpass(self.order, lo, hi, self.rate_hz))
            .transpose()
    }
}

const CHUNK: usize = 16;

struct Phasors {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

fn window_phasors(
    window: &ChannelMatrix,
    montage: &Montage,
    filter: Option<&FirFilter>,
    extractor: &mut PhaseExtractor,
) -> Result<Phasors> {
    let (k, t) = (window.n_channels(), window.n_samples());
    let mut cos = Vec::with_capacity(k * t);
    let mut sin = Vec::with_capacity(k * t);
    for c in 0..k {
        let mut x = window.row_f64(c);
        if let Some(f) = filter {
            x = filtfilt(&x, f)?;
        }
        let z = extractor.phasors(&x)?.ok_or_else(|| Error::InvalidChannel {
            channel: montage.label(c).unwrap_or("?").to_string(),
            reason: "zero amplitude, phase undefined".into(),
        })?;
        cos.extend(z.iter().map(|p| p.re));
        sin.extend(z.iter().map(|p| p.im));
    }
    Ok(Phasors { cos, sin })
}

fn check_windows<W: AsRef<ChannelMatrix>>(windows: &[W], montage: &Montage) -> Result<(usize, usize)> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Length("no windows to estimate connectivity from".into()))?
        .as_ref();
    let (k, t) = (first.n_channels(), first.n_samples());
    if k != montage.len() {
        return Err(Error::Shape(format!("{k}-channel windows for a {}-channel montage", montage.len())));
    }
    if windows.iter().any(|w| w.as_ref().n_channels() != k || w.as_ref().n_samples() != t) {
        return Err(Error::Shape("windows differ in shape".into()));
    }
    Ok((k, t))
}

/// Upper-triangular PLV pooled over all windows (trials `n`) and samples
/// (time bins `t`).
pub fn plv_from_windows<W>(windows: &[W], montage: &Montage, options: &PlvOptions) -> Result<PlvMatrix>
where
    W: AsRef<ChannelMatrix> + Sync,
{
    let (k, t) = check_windows(windows, montage)?;
    let filter = options.filter()?;
    let mut acc = PlvAccumulator::new(k);
    let (mut cos, mut sin) = (Vec::new(), Vec::new());
    for chunk in windows.chunks(CHUNK) {
        let blocks = chunk
            .par_iter()
            .map_init(
                || PhaseExtractor::new(t),
                |ex, w| {
                    let ex = ex.as_mut().map_err(|e| Error::Length(e.to_string()))?;
                    window_phasors(w.as_ref(), montage, filter.as_ref(), ex)
                },
            )
            .collect::<Result<Vec<_>>>()?;
        // Lay the chunk out as one K × (chunk·T) block.
        let len = blocks.len() * t;
        cos.clear();
        sin.clear();
        cos.resize(k * len, 0.0);
        sin.resize(k * len, 0.0);
        for (b, block) in blocks.iter().enumerate() {
            for c in 0..k {
                let dst = c * len + b * t;
                cos[dst..dst + t].copy_from_slice(&block.cos[c * t..(c + 1) * t]);
                sin[dst..dst + t].copy_from_slice(&block.sin[c * t..(c + 1) * t]);
            }
        }
        acc.add_phasors(&cos, &sin, len)?;
    }
    acc.finish()
}

/// Symmetric connectivity matrix `S`.
pub fn connectivity_matrix<W>(windows: &[W], montage: &Montage, options: &PlvOptions) -> Result<PlvMatrix>
where
    W: AsRef<ChannelMatrix> + Sync,
{
    symmetrize(&plv_from_windows(windows, montage, options)?)
}

/// Channel weights from training windows pooled across classes.
pub fn fit_weights<W>(windows: &[W], montage: &Montage) -> Result<ChannelWeights>
where
    W: AsRef<ChannelMatrix> + Sync,
{
    fit_weights_with(windows, montage, &PlvOptions::default())
}

pub fn fit_weights_with<W>(windows: &[W], montage: &Montage, options: &PlvOptions) -> Result<ChannelWeights>
where
    W: AsRef<ChannelMatrix> + Sync,
{
    minmax_normalize(&row_reduce(&connectivity_matrix(windows, montage, options)?)?)
}

/// Materialized phase tensor of a window set; mostly useful for inspection,
/// since [`plv_from_windows`] streams instead.
pub fn extract_phases<W>(windows: &[W], montage: &Montage, rate_hz: f64, band_hz: [f64; 2]) -> Result<PhaseTensor>
where
    W: AsRef<ChannelMatrix>,
{
    let (k, t) = check_windows(windows, montage)?;
    let mut ex = PhaseExtractor::new(t)?;
    let mut phases = Vec::with_capacity(windows.len() * k * t);
    let mut degenerate = vec![false; k];
    for w in windows {
        for (c, flag) in degenerate.iter_mut().enumerate() {
            let p = ex.phase(&w.as_ref().row_f64(c))?;
            *flag |= p.is_degenerate();
            phases.extend(p.phase);
        }
    }
    let mut tensor = PhaseTensor::new(windows.len(), k, t, phases, rate_hz, band_hz)?
        .with_labels(montage.labels().to_vec())?;
    for (c, _) in degenerate.iter().enumerate().filter(|(_, d)| **d) {
        tensor.mark_degenerate(c);
    }
    Ok(tensor)
}

/// Edge list as CSV: `k1_label,k2_label,value`.
pub fn write_edges_csv<W: Write>(edges: &[Edge], montage: &Montage, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["k1_label", "k2_label", "value"]).map_err(fmt)?;
    for e in edges {
        let label = |k: usize| montage.label(k).map(str::to_string).ok_or_else(|| Error::Range(format!("channel {k}")));
        w.write_record([label(e.k1)?, label(e.k2)?, format!("{}", e.value)]).map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// `{label: weight}` object.
pub fn weights_to_json(weights: &ChannelWeights, montage: &Montage) -> Result<serde_json::Value> {
    if weights.len() != montage.len() {
        return Err(Error::Shape(format!("{} weights for {} channels", weights.len(), montage.len())));
    }
    let map: BTreeMap<&str, f64> = montage
        .labels()
        .iter()
        .map(String::as_str)
        .zip(weights.as_slice().iter().copied())
        .collect();
    Ok(serde_json::to_value(map).expect("map of floats serializes"))
}

/// Reverses [`weights_to_json`], reordering to the montage.
pub fn weights_from_json(value: &serde_json::Value, montage: &Montage) -> Result<ChannelWeights> {
    let map: BTreeMap<String, f64> =
        serde_json::from_value(value.clone()).map_err(|e| Error::Format(format!("weights json: {e}")))?;
    let w = montage
        .labels()
        .iter()
        .map(|l| {
            map.get(l)
                .copied()
                .ok_or_else(|| Error::Mapping(format!("no weight for channel {l}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if map.len() != w.len() {
        return Err(Error::Mapping("weights name channels outside the montage".into()));
    }
    ChannelWeights::new(w)
}

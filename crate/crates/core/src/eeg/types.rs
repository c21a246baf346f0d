use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Montage;
use crate::error::{Error, Result};

/// A `[channels × samples]` block of microvolt samples, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    n_channels: usize,
    n_samples: usize,
    data: Vec<f32>,
}

impl ChannelMatrix {
    pub fn new(n_channels: usize, n_samples: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n_channels * n_samples {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {n_channels}x{n_samples} matrix",
                data.len()
            )));
        }
        Ok(ChannelMatrix {
            n_channels,
            n_samples,
            data,
        })
    }

    pub fn zeros(n_channels: usize, n_samples: usize) -> Self {
        ChannelMatrix {
            n_channels,
            n_samples,
            data: vec![0.0; n_channels * n_samples],
        }
    }

    /// Builds a matrix from `f64` rows, rounding to `f32`.
    pub fn from_rows_f64(rows: &[Vec<f64>]) -> Result<Self> {
        let n_samples = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_samples) {
            return Err(Error::Shape("rows have different lengths".into()));
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Ok(ChannelMatrix {
            n_channels: rows.len(),
            n_samples,
            data,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, channel: usize) -> &[f32] {
        &self.data[channel * self.n_samples..(channel + 1) * self.n_samples]
    }

    pub fn row_mut(&mut self, channel: usize) -> &mut [f32] {
        &mut self.data[channel * self.n_samples..(channel + 1) * self.n_samples]
    }

    pub fn row_f64(&self, channel: usize) -> Vec<f64> {
        self.row(channel).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.n_channels).map(|k| self.row_f64(k)).collect()
    }

    /// Copies samples `[start, start + len)` of every channel.
    pub fn slice_samples(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_samples {
            return Err(Error::Range(format!(
                "samples {start}..{} exceed length {}",
                start + len,
                self.n_samples
            )));
        }
        let mut data = Vec::with_capacity(self.n_channels * len);
        for k in 0..self.n_channels {
            data.extend_from_slice(&self.row(k)[start..start + len]);
        }
        Ok(ChannelMatrix {
            n_channels: self.n_channels,
            n_samples: len,
            data,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// The four imagined actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    /// Picking up a cell phone.
    PP,
    /// Pouring water.
    PW,
    /// Opening a door.
    OD,
    /// Eating food.
    EF,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 4] = [ClassLabel::PP, ClassLabel::PW, ClassLabel::OD, ClassLabel::EF];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::PP => "PP",
            ClassLabel::PW => "PW",
            ClassLabel::OD => "OD",
            ClassLabel::EF => "EF",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Mapping(format!("unknown class label {s:?}")))
    }
}

/// The fixed class subsets used for 2-, 3- and 4-class decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ClassSet {
    Two,
    Three,
    Four,
}

impl ClassSet {
    pub fn labels(self) -> &'static [ClassLabel] {
        match self {
            ClassSet::Two => &[ClassLabel::PW, ClassLabel::EF],
            ClassSet::Three => &[ClassLabel::PW, ClassLabel::OD, ClassLabel::EF],
            ClassSet::Four => &ClassLabel::ALL,
        }
    }

    pub fn n_classes(self) -> usize {
        self.labels().len()
    }

    /// Position of `label` inside this subset, i.e. the network's class index.
    pub fn index_of(self, label: ClassLabel) -> Option<usize> {
        self.labels().iter().position(|&l| l == label)
    }
}

impl TryFrom<u8> for ClassSet {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            2 => Ok(ClassSet::Two),
            3 => Ok(ClassSet::Three),
            4 => Ok(ClassSet::Four),
            other => Err(Error::Config(format!("class set must be 2, 3 or 4, got {other}"))),
        }
    }
}

impl From<ClassSet> for u8 {
    fn from(c: ClassSet) -> u8 {
        c.n_classes() as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub sample: usize,
    pub code: u32,
}

/// A continuous multichannel recording with event markers.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub montage: Montage,
    pub rate_hz: f64,
    pub subject_id: String,
    pub samples: ChannelMatrix,
    pub markers: Vec<Marker>,
    /// Event code to class, carried in the container header.
    pub label_map: BTreeMap<u32, ClassLabel>,
}

impl Recording {
    pub fn new(
        montage: Montage,
        rate_hz: f64,
        subject_id: impl Into<String>,
        samples: ChannelMatrix,
        markers: Vec<Marker>,
    ) -> Result<Self> {
        let rec = Recording {
            montage,
            rate_hz,
            subject_id: subject_id.into(),
            samples,
            markers,
            label_map: BTreeMap::new(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn with_label_map(mut self, label_map: BTreeMap<u32, ClassLabel>) -> Self {
        self.label_map = label_map;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::Config(format!("sampling rate {} must be positive", self.rate_hz)));
        }
        if self.samples.n_channels() != self.montage.len() {
            return Err(Error::Shape(format!(
                "{} sample rows for a {}-channel montage",
                self.samples.n_channels(),
                self.montage.len()
            )));
        }
        if !self.samples.all_finite() {
            return Err(Error::Numeric("recording contains non-finite samples".into()));
        }
        let n = self.samples.n_samples();
        for pair in self.markers.windows(2) {
            if pair[1].sample < pair[0].sample {
                return Err(Error::Contract("markers must be sorted by sample index".into()));
            }
        }
        if let Some(m) = self.markers.iter().find(|m| m.sample >= n) {
            return Err(Error::Range(format!("marker at {} beyond {n} samples", m.sample)));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.n_samples() as f64 / self.rate_hz
    }
}

/// One imagery trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub label: ClassLabel,
    pub data: ChannelMatrix,
    pub rate_hz: f64,
    pub subject_id: String,
    pub trial_id: u32,
    /// Time of the first sample relative to imagery onset, in seconds.
    pub t_start_s: f64,
}

impl Trial {
    pub fn n_samples(&self) -> usize {
        self.data.n_samples()
    }

    pub fn duration_s(&self) -> f64 {
        self.data.n_samples() as f64 / self.rate_hz
    }
}

/// All trials of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subject_id: String,
    pub montage: Montage,
    pub rate_hz: f64,
    pub trials: Vec<Trial>,
}

impl Dataset {
    pub fn new(
        subject_id: impl Into<String>,
        montage: Montage,
        rate_hz: f64,
        trials: Vec<Trial>,
    ) -> Result<Self> {
        let ds = Dataset {
            subject_id: subject_id.into(),
            montage,
            rate_hz,
            trials,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::Config(format!("sampling rate {} must be positive", self.rate_hz)));
        }
        let mut ids = HashSet::with_capacity(self.trials.len());
        for t in &self.trials {
            if t.data.n_channels() != self.montage.len() {
                return Err(Error::Shape(format!(
                    "trial {} has {} channels, montage has {}",
                    t.trial_id,
                    t.data.n_channels(),
                    self.montage.len()
                )));
            }
            if t.rate_hz != self.rate_hz {
                return Err(Error::Contract(format!(
                    "trial {} sampled at {} Hz inside a {} Hz dataset",
                    t.trial_id, t.rate_hz, self.rate_hz
                )));
            }
            if !ids.insert(t.trial_id) {
                return Err(Error::Contract(format!("duplicate trial id {}", t.trial_id)));
            }
            if !t.data.all_finite() {
                return Err(Error::Numeric(format!("trial {} has non-finite samples", t.trial_id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Keeps only trials whose label belongs to `set`.
    pub fn restrict_to(&self, set: ClassSet) -> Dataset {
        Dataset {
            subject_id: self.subject_id.clone(),
            montage: self.montage.clone(),
            rate_hz: self.rate_hz,
            trials: self
                .trials
                .iter()
                .filter(|t| set.index_of(t.label).is_some())
                .cloned()
                .collect(),
        }
    }

    pub fn class_counts(&self) -> BTreeMap<ClassLabel, usize> {
        let mut counts = BTreeMap::new();
        for t in &self.trials {
            *counts.entry(t.label).or_insert(0) += 1;
        }
        counts
    }
}

/// A fixed-length crop of a trial produced by sliding-window augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub subject_id: String,
    pub trial_id: u32,
    /// Position of this window within its trial.
    pub index: u32,
    /// First sample of the window inside the trial.
    pub start: usize,
    pub label: ClassLabel,
    pub data: ChannelMatrix,
}

/// Windows cut from one subject's trials, as written by the preprocessing step.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub subject_id: String,
    pub montage: Montage,
    pub rate_hz: f64,
    pub windows: Vec<Window>,
}

/// Cuts one trial per marker whose code is in `codes`.
///
/// The window for a marker at sample `m` starts at `m + round(offset_s·rate)`
/// and spans `round(length_s·rate)` samples; `offset_s` may be negative to keep
/// a pre-onset baseline.
pub fn epoch(
    recording: &Recording,
    codes: &[u32],
    offset_s: f64,
    length_s: f64,
    label_map: &BTreeMap<u32, ClassLabel>,
) -> Result<Vec<Trial>> {
    if let Some(code) = codes.iter().find(|c| !label_map.contains_key(c)) {
        return Err(Error::Mapping(format!("event code {code} has no class label")));
    }
    if !(length_s > 0.0) {
        return Err(Error::Config(format!("epoch length {length_s} must be positive")));
    }
    let rate = recording.rate_hz;
    let len = (length_s * rate).round() as usize;
    let offset = (offset_s * rate).round() as i64;
    let total = recording.samples.n_samples() as i64;
    let mut trials = Vec::new();
    for (trial_id, marker) in recording
        .markers
        .iter()
        .filter(|m| codes.contains(&m.code))
        .enumerate()
    {
        let start = marker.sample as i64 + offset;
        if start < 0 || start + len as i64 > total {
            return Err(Error::Range(format!(
                "epoch {start}..{} of marker at sample {} exceeds recording of {total} samples",
                start + len as i64,
                marker.sample
            )));
        }
        trials.push(Trial {
            label: label_map[&marker.code],
            data: recording.samples.slice_samples(start as usize, len)?,
            rate_hz: rate,
            subject_id: recording.subject_id.clone(),
            trial_id: trial_id as u32,
            t_start_s: offset as f64 / rate,
        });
    }
    Ok(trials)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recording(n_samples: usize, markers: Vec<Marker>) -> Recording {
        let montage = Montage::default();
        let data: Vec<f32> = (0..64 * n_samples).map(|i| (i % 97) as f32).collect();
        Recording::new(
            montage,
            250.0,
            "S1",
            ChannelMatrix::new(64, n_samples, data).unwrap(),
            markers,
        )
        .unwrap()
    }

    fn label_map() -> BTreeMap<u32, ClassLabel> {
        [(1, ClassLabel::PP), (2, ClassLabel::PW), (3, ClassLabel::OD), (4, ClassLabel::EF)]
            .into_iter()
            .collect()
    }

    #[test]
    fn epoch_cuts_two_hundred_trials() {
        let markers = (0..200)
            .map(|i| Marker {
                sample: 100 + i * 1300,
                code: 1 + (i % 4) as u32,
            })
            .collect();
        let rec = recording(100 + 200 * 1300, markers);
        let trials = epoch(&rec, &[1, 2, 3, 4], 0.0, 5.0, &label_map()).unwrap();
        assert_eq!(trials.len(), 200);
        assert!(trials.iter().all(|t| t.data.n_channels() == 64 && t.n_samples() == 1250));
        assert_eq!(trials[1].label, ClassLabel::PW);
        assert_eq!(trials[0].data.row(3)[0], rec.samples.row(3)[100]);
    }

    #[test]
    fn epoch_without_matching_markers_is_empty() {
        let rec = recording(1000, vec![Marker { sample: 10, code: 9 }]);
        let trials = epoch(&rec, &[1], 0.0, 1.0, &label_map()).unwrap();
        assert!(trials.is_empty());
    }

    #[test]
    fn epoch_past_the_end_is_a_range_error() {
        let rec = recording(1000, vec![Marker { sample: 999, code: 1 }]);
        let err = epoch(&rec, &[1], 0.0, 2.0, &label_map()).unwrap_err();
        assert!(matches!(err, Error::Range(_)), "{err}");
    }

    #[test]
    fn unknown_code_is_a_mapping_error() {
        let rec = recording(1000, vec![]);
        assert!(matches!(
            epoch(&rec, &[7], 0.0, 1.0, &label_map()),
            Err(Error::Mapping(_))
        ));
    }

    #[test]
    fn recording_rejects_unsorted_or_out_of_range_markers() {
        let montage = Montage::numbered(2).unwrap();
        let data = ChannelMatrix::zeros(2, 10);
        let unsorted = vec![Marker { sample: 5, code: 1 }, Marker { sample: 2, code: 1 }];
        assert!(Recording::new(montage.clone(), 100.0, "s", data.clone(), unsorted).is_err());
        let oob = vec![Marker { sample: 10, code: 1 }];
        assert!(Recording::new(montage, 100.0, "s", data, oob).is_err());
    }

    #[test]
    fn class_sets_are_fixed_subsets() {
        assert_eq!(ClassSet::Two.labels(), &[ClassLabel::PW, ClassLabel::EF]);
        assert_eq!(ClassSet::Three.index_of(ClassLabel::OD), Some(1));
        assert_eq!(ClassSet::Two.index_of(ClassLabel::PP), None);
        assert!(ClassSet::try_from(5).is_err());
        assert_eq!("ef".parse::<ClassLabel>().unwrap(), ClassLabel::EF);
    }
}

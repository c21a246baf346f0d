use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 64-electrode extended 10-20 layout used by the default montage.
///
/// Sixty names come from the recording description (Fp1-2, AF5-8, AFz, F1-8,
/// Fz, FT7-8, FC1-6, T7-8, C1-6, Cz, TP7-8, CP1-6, CPz, P1-8, Pz, PO3-4,
/// PO7-8, POz, O1-2, Oz, Iz); AF3, AF4, FT9 and FT10 complete the standard
/// 64-channel cap with FCz as reference and Fpz as ground.
pub const DEFAULT_CHANNELS: [&str; 64] = [
    "Fp1", "Fp2", "AF7", "AF5", "AF3", "AFz", "AF4", "AF6", "AF8", "F7", "F5", "F3", "F1", "Fz",
    "F2", "F4", "F6", "F8", "FT9", "FT7", "FC5", "FC3", "FC1", "FC2", "FC4", "FC6", "FT8", "FT10",
    "T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8", "TP7", "CP5", "CP3", "CP1", "CPz", "CP2",
    "CP4", "CP6", "TP8", "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8", "PO7", "PO3", "POz",
    "PO4", "PO8", "O1", "Oz", "O2", "Iz",
];

/// Ordered channel names of a recording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MontageRepr", into = "MontageRepr")]
pub struct Montage {
    labels: Vec<String>,
    reference_note: String,
}

#[derive(Serialize, Deserialize)]
struct MontageRepr {
    labels: Vec<String>,
    #[serde(default)]
    reference_note: String,
}

impl TryFrom<MontageRepr> for Montage {
    type Error = Error;

    fn try_from(repr: MontageRepr) -> Result<Self> {
        Montage::new(repr.labels, repr.reference_note)
    }
}

impl From<Montage> for MontageRepr {
    fn from(m: Montage) -> Self {
        MontageRepr {
            labels: m.labels,
            reference_note: m.reference_note,
        }
    }
}

impl Montage {
    pub fn new(labels: Vec<String>, reference_note: impl Into<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Config(format!(
                "a montage needs at least 2 channels, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::Config(format!("duplicate channel label {label:?}")));
            }
        }
        Ok(Montage {
            labels,
            reference_note: reference_note.into(),
        })
    }

    /// Builds a montage from generic names `Ch1..ChK`.
    pub fn numbered(n_channels: usize) -> Result<Self> {
        Montage::new(
            (1..=n_channels).map(|i| format!("Ch{i}")).collect(),
            "synthetic",
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn reference_note(&self) -> &str {
        &self.reference_note
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Resolves a list of channel names, failing on the first unknown one.
    pub fn indices_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l.as_ref())
                    .ok_or_else(|| Error::Mapping(format!("channel {:?} not in montage", l.as_ref())))
            })
            .collect()
    }
}

impl Default for Montage {
    fn default() -> Self {
        Montage {
            labels: DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect(),
            reference_note: "reference FCz, ground Fpz".to_string(),
        }
    }
}

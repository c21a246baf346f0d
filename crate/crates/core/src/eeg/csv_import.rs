use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{ChannelMatrix, ClassLabel, Marker, Montage, Recording};
use crate::error::{Error, Result};

/// Metadata that accompanies a CSV recording.
#[derive(Debug, Clone, Deserialize)]
pub struct CsvSidecar {
    pub rate_hz: f64,
    #[serde(default)]
    pub subject_id: String,
    #[serde(default)]
    pub markers: Vec<Marker>,
    #[serde(default)]
    pub label_map: BTreeMap<u32, ClassLabel>,
    #[serde(default)]
    pub reference_note: String,
}

/// Reads a recording stored as one CSV row per sample and one column per
/// channel, with channel names in the header row.
pub fn import_csv(csv_path: impl AsRef<Path>, sidecar_path: impl AsRef<Path>) -> Result<Recording> {
    let sidecar_path = sidecar_path.as_ref();
    let text = fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let sidecar: CsvSidecar =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad sidecar: {e}")))?;

    let csv_path = csv_path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(|e| Error::Format(format!("{}: {e}", csv_path.display())))?;
    let labels: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let montage = Montage::new(labels, sidecar.reference_note.clone())?;
    let k = montage.len();

    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        if record.len() != k {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {k}",
                line + 2,
                record.len()
            )));
        }
        for (row, field) in rows.iter_mut().zip(record.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("row {}: {field:?} is not a number", line + 2)))?;
            row.push(v);
        }
    }
    let samples = ChannelMatrix::from_rows_f64(&rows)?;
    Ok(Recording::new(montage, sidecar.rate_hz, sidecar.subject_id, samples, sidecar.markers)?
        .with_label_map(sidecar.label_map))
}

//! The EEGC on-disk container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset 0   8 bytes   magic "EEGC\0\0v1"
//! offset 8   8 bytes   u64 header length H
//! offset 16  H bytes   UTF-8 JSON header
//! offset 16+H          f32 payload, record by record, channel-major within a record
//! ```
//!
//! A recording is one record; datasets and window sets store one record per
//! trial or window in header order. The payload must contain exactly
//! `n_channels × Σ n_samples` values.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChannelMatrix, ClassLabel, Dataset, Marker, Montage, Recording, Trial, Window, WindowSet};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"EEGC\0\0v1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    Recording,
    Dataset,
    Windows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: ContentKind,
    subject_id: String,
    rate_hz: f64,
    n_channels: usize,
    montage: Montage,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    markers: Vec<Marker>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    label_map: BTreeMap<u32, ClassLabel>,
    records: Vec<RecordHeader>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordHeader {
    n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trial_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<ClassLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_start_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_sample: Option<usize>,
}

impl RecordHeader {
    fn plain(n_samples: usize) -> Self {
        RecordHeader {
            n_samples,
            trial_id: None,
            label: None,
            t_start_s: None,
            window_index: None,
            start_sample: None,
        }
    }

    fn trial_id(&self) -> Result<u32> {
        self.trial_id
            .ok_or_else(|| Error::Format("record without trial_id".into()))
    }

    fn label(&self) -> Result<ClassLabel> {
        self.label.ok_or_else(|| Error::Format("record without label".into()))
    }
}

/// Anything that can be stored in an EEGC file.
pub trait EegcContent: Sized {
    const KIND: ContentKind;

    #[doc(hidden)]
    fn encode(&self) -> (EncodedHeader, Vec<&[f32]>);

    #[doc(hidden)]
    fn decode(header: EncodedHeader, records: Vec<ChannelMatrix>) -> Result<Self>;
}

/// Opaque header handle used by [`EegcContent`] implementations.
#[doc(hidden)]
pub struct EncodedHeader(Header);

/// The decoded content of a file of unknown kind.
#[derive(Debug, Clone, PartialEq)]
pub enum EegcFile {
    Recording(Recording),
    Dataset(Dataset),
    Windows(WindowSet),
}

impl EegcContent for Recording {
    const KIND: ContentKind = ContentKind::Recording;

    fn encode(&self) -> (EncodedHeader, Vec<&[f32]>) {
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: Self::KIND,
            subject_id: self.subject_id.clone(),
            rate_hz: self.rate_hz,
            n_channels: self.montage.len(),
            montage: self.montage.clone(),
            markers: self.markers.clone(),
            label_map: self.label_map.clone(),
            records: vec![RecordHeader::plain(self.samples.n_samples())],
        };
        (EncodedHeader(header), vec![self.samples.as_slice()])
    }

    fn decode(header: EncodedHeader, mut records: Vec<ChannelMatrix>) -> Result<Self> {
        let h = header.0;
        if records.len() != 1 {
            return Err(Error::Format(format!(
                "a recording holds exactly one record, found {}",
                records.len()
            )));
        }
        let samples = records.remove(0);
        let rec = Recording::new(h.montage, h.rate_hz, h.subject_id, samples, h.markers).map_err(as_format)?;
        Ok(rec.with_label_map(h.label_map))
    }
}

impl EegcContent for Dataset {
    const KIND: ContentKind = ContentKind::Dataset;

    fn encode(&self) -> (EncodedHeader, Vec<&[f32]>) {
        let records = self
            .trials
            .iter()
            .map(|t| RecordHeader {
                trial_id: Some(t.trial_id),
                label: Some(t.label),
                t_start_s: Some(t.t_start_s),
                ..RecordHeader::plain(t.n_samples())
            })
            .collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: Self::KIND,
            subject_id: self.subject_id.clone(),
            rate_hz: self.rate_hz,
            n_channels: self.montage.len(),
            montage: self.montage.clone(),
            markers: Vec::new(),
            label_map: BTreeMap::new(),
            records,
        };
        let payload = self.trials.iter().map(|t| t.data.as_slice()).collect();
        (EncodedHeader(header), payload)
    }

    fn decode(header: EncodedHeader, records: Vec<ChannelMatrix>) -> Result<Self> {
        let h = header.0;
        let trials = h
            .records
            .iter()
            .zip(records)
            .map(|(r, data)| {
                Ok(Trial {
                    label: r.label()?,
                    data,
                    rate_hz: h.rate_hz,
                    subject_id: h.subject_id.clone(),
                    trial_id: r.trial_id()?,
                    t_start_s: r.t_start_s.unwrap_or(0.0),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(h.subject_id, h.montage, h.rate_hz, trials).map_err(as_format)
    }
}

impl EegcContent for WindowSet {
    const KIND: ContentKind = ContentKind::Windows;

    fn encode(&self) -> (EncodedHeader, Vec<&[f32]>) {
        let records = self
            .windows
            .iter()
            .map(|w| RecordHeader {
                trial_id: Some(w.trial_id),
                label: Some(w.label),
                window_index: Some(w.index),
                start_sample: Some(w.start),
                ..RecordHeader::plain(w.data.n_samples())
            })
            .collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: Self::KIND,
            subject_id: self.subject_id.clone(),
            rate_hz: self.rate_hz,
            n_channels: self.montage.len(),
            montage: self.montage.clone(),
            markers: Vec::new(),
            label_map: BTreeMap::new(),
            records,
        };
        let payload = self.windows.iter().map(|w| w.data.as_slice()).collect();
        (EncodedHeader(header), payload)
    }

    fn decode(header: EncodedHeader, records: Vec<ChannelMatrix>) -> Result<Self> {
        let h = header.0;
        let windows = h
            .records
            .iter()
            .zip(records)
            .map(|(r, data)| {
                Ok(Window {
                    subject_id: h.subject_id.clone(),
                    trial_id: r.trial_id()?,
                    index: r.window_index.unwrap_or(0),
                    start: r.start_sample.unwrap_or(0),
                    label: r.label()?,
                    data,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if windows.iter().any(|w| !w.data.all_finite()) {
            return Err(Error::Numeric("non-finite sample in payload".into()));
        }
        Ok(WindowSet {
            subject_id: h.subject_id,
            montage: h.montage,
            rate_hz: h.rate_hz,
            windows,
        })
    }
}

/// Serialises `value` into the EEGC byte layout.
/// Validation failures of decoded content are format errors, except
/// non-finite samples, which keep their numeric kind.
fn as_format(e: Error) -> Error {
    match e {
        Error::Numeric(_) => e,
        other => Error::Format(other.to_string()),
    }
}

pub fn encode_eegc<T: EegcContent>(value: &T) -> Result<Vec<u8>> {
    let (EncodedHeader(header), payload) = value.encode();
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let n_values: usize = payload.iter().map(|p| p.len()).sum();
    let mut bytes = Vec::with_capacity(16 + json.len() + 4 * n_values);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for record in payload {
        for v in record {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

fn parse_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 16 || bytes[..8] != MAGIC {
        return Err(Error::Format("missing EEGC magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|h| h.checked_add(16))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Format(format!("header length {header_len} exceeds file size")))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.n_channels != header.montage.len() {
        return Err(Error::Format(format!(
            "header declares {} channels but montage has {}",
            header.n_channels,
            header.montage.len()
        )));
    }
    Ok((header, &bytes[header_end..]))
}

fn split_payload(header: &Header, payload: &[u8]) -> Result<Vec<ChannelMatrix>> {
    let k = header.n_channels;
    let expected: usize = header.records.iter().map(|r| r.n_samples * k).sum();
    if payload.len() != expected * 4 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header describes {} float32 values ({} bytes)",
            payload.len(),
            expected,
            expected * 4
        )));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    header
        .records
        .iter()
        .map(|r| {
            let data: Vec<f32> = values.by_ref().take(r.n_samples * k).collect();
            ChannelMatrix::new(k, r.n_samples, data)
        })
        .collect()
}

/// Parses EEGC bytes holding content of type `T`.
pub fn decode_eegc<T: EegcContent>(bytes: &[u8]) -> Result<T> {
    let (header, payload) = parse_header(bytes)?;
    if header.kind != T::KIND {
        return Err(Error::Format(format!(
            "file holds {:?}, expected {:?}",
            header.kind,
            T::KIND
        )));
    }
    let records = split_payload(&header, payload)?;
    T::decode(EncodedHeader(header), records)
}

pub fn save_eegc<T: EegcContent>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_eegc(value)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_eegc<T: EegcContent>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_eegc(&bytes)
}

/// Loads a file whatever its content kind.
pub fn load_any(path: impl AsRef<Path>) -> Result<EegcFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, _) = parse_header(&bytes)?;
    Ok(match header.kind {
        ContentKind::Recording => EegcFile::Recording(decode_eegc(&bytes)?),
        ContentKind::Dataset => EegcFile::Dataset(decode_eegc(&bytes)?),
        ContentKind::Windows => EegcFile::Windows(decode_eegc(&bytes)?),
    })
}

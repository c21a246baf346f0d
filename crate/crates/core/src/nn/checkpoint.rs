use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::network::{Network, Param};
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use crate::connectivity::ChannelWeights;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "fudnn-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    /// Offset into the blob, in `f32` elements.
    pub offset: usize,
}

/// JSON side of a checkpoint; the values live in a little-endian `f32` blob
/// next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub spec: NetworkSpec,
    pub seed: u64,
    pub epoch: u64,
    pub blob: String,
    pub params: Vec<ParamEntry>,
    pub channel_weights: Option<ChannelWeights>,
}

fn blob_path(json: &Path, manifest: &CheckpointManifest) -> PathBuf {
    json.parent().unwrap_or(Path::new(".")).join(&manifest.blob)
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`; returns the JSON path.
pub fn save_checkpoint(network: &Network<f32>, seed: u64, epoch: u64, dir: &Path, stem: &str) -> Result<PathBuf> {
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0;
    for p in network.params() {
        entries.push(ParamEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            trainable: p.trainable,
            offset,
        });
        offset += p.value.numel();
        for v in p.value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        spec: network.spec().clone(),
        seed,
        epoch,
        blob: format!("{stem}.bin"),
        params: entries,
        channel_weights: network.channel_weights().cloned(),
    };
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))?;
    let bin = blob_path(&json_path, &manifest);
    fs::write(&bin, blob).map_err(|e| Error::io(&bin, e))?;
    Ok(json_path)
}

pub fn load_checkpoint(json_path: &Path) -> Result<(Network<f32>, CheckpointManifest)> {
    let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("checkpoint manifest: {e}")))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("unsupported checkpoint format {:?}", manifest.format)));
    }
    let bin = blob_path(json_path, &manifest);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format("checkpoint blob is not a whole number of f32 values".into()));
    }
    let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let mut params = Vec::with_capacity(manifest.params.len());
    let mut expected = 0;
    for e in &manifest.params {
        let n: usize = e.shape.iter().product();
        if e.offset != expected || e.offset + n > values.len() {
            return Err(Error::Format(format!("parameter {} lies outside the blob", e.name)));
        }
        expected += n;
        params.push(Param {
            name: e.name.clone(),
            value: Tensor::new(e.shape.clone(), values[e.offset..e.offset + n].to_vec())?,
            trainable: e.trainable,
        });
    }
    if expected != values.len() {
        return Err(Error::Format("checkpoint blob has trailing values".into()));
    }
    let net = Network::from_params(manifest.spec.clone(), params, manifest.channel_weights.clone())?;
    Ok((net, manifest))
}

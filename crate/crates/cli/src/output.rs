//! Output directories and the run manifest written into each of them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Path, size and SHA-256 of a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, shown_as: String) -> CliResult<Self> {
        let data = fs::read(path).map_err(|source| CliError::Read { path: path.into(), source })?;
        Ok(FileDigest { path: shown_as, bytes: data.len() as u64, sha256: hex::encode(Sha256::digest(&data)) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_s: u64,
    pub elapsed_s: f64,
}

/// Provenance of one command run: what went in, what came out, with which
/// settings and how long it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Effective settings after merging defaults, config file and flags.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timing: Timing,
}

/// A command's `--out` directory. Every write goes through here, so nothing
/// lands outside it, and the manifest can list what was produced.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
    inputs: Vec<FileDigest>,
    started: Instant,
    started_unix_s: u64,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Write { path: root.into(), source })?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
            inputs: Vec::new(),
            started: Instant::now(),
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of a plain file name inside the directory.
    fn target(&self, name: &str) -> CliResult<PathBuf> {
        let mut parts = Path::new(name).components();
        match (parts.next(), parts.next()) {
            (Some(Component::Normal(_)), None) => Ok(self.root.join(name)),
            _ => Err(CliError::Usage(format!("output name {name:?} must be a plain file name"))),
        }
    }

    /// Hashes an input file for the manifest.
    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let digest = FileDigest::of(path, path.display().to_string())?;
        if !self.inputs.contains(&digest) {
            self.inputs.push(digest);
        }
        Ok(())
    }

    /// Notes a file that a library routine already wrote into the directory.
    pub fn record(&mut self, name: &str) -> CliResult<PathBuf> {
        let path = self.target(name)?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(path)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.record(name)?;
        fs::write(&path, bytes).map_err(|source| CliError::Write { path, source })
    }

    /// Pretty JSON with a trailing newline.
    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("output values serialize");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Header from the row type's field names.
    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| fudnn::Error::Format(format!("{name}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| fudnn::Error::Format(format!("{name}: {e}")))?;
        self.write_bytes(name, &bytes)
    }

    /// Explicit header and pre-formatted records.
    pub fn write_table(&mut self, name: &str, header: &[String], records: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fmt = |e: csv::Error| fudnn::Error::Format(format!("{name}: {e}"));
        w.write_record(header).map_err(fmt)?;
        for r in records {
            w.write_record(r).map_err(fmt)?;
        }
        let bytes = w.into_inner().map_err(|e| fudnn::Error::Format(format!("{name}: {e}")))?;
        self.write_bytes(name, &bytes)
    }

    /// Writes `manifest.json` describing the run and returns it.
    pub fn finish(self, command: &str, config: serde_json::Value, seeds: BTreeMap<String, u64>) -> CliResult<RunManifest> {
        let mut names = self.written.clone();
        names.sort();
        let outputs = names
            .iter()
            .filter(|n| n.as_str() != MANIFEST_NAME)
            .map(|n| FileDigest::of(&self.root.join(n), n.clone()))
            .collect::<CliResult<Vec<_>>>()?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            seeds,
            threads: rayon::current_num_threads(),
            inputs: self.inputs.clone(),
            outputs,
            timing: Timing { started_unix_s: self.started_unix_s, elapsed_s: self.started.elapsed().as_secs_f64() },
        };
        let path = self.root.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|source| CliError::Write { path, source })?;
        Ok(manifest)
    }
}

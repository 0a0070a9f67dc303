//! `manifest.json`: config echo, stage results, timings and a checksummed
//! inventory of the files a run wrote.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::files::{TOOL, VERSION};
use crate::{CliError, ExperimentConfig};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub threads: usize,
    pub config: ExperimentConfig,
    /// Per-stage summaries keyed by stage name.
    pub stages: BTreeMap<String, serde_json::Value>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> Result<(u64, String), CliError> {
    let bytes = std::fs::read(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, threads: usize) -> Self {
        RunManifest {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            command: command.to_string(),
            threads,
            config: config.clone(),
            stages: BTreeMap::new(),
            timings: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    /// Checksums `name` (relative to `dir`) and adds or replaces its entry.
    pub fn record(&mut self, dir: &Path, name: &str) -> Result<(), CliError> {
        let (bytes, sha256) = sha256_file(&dir.join(name))?;
        let entry = FileEntry { name: name.to_string(), bytes, sha256 };
        match self.files.iter_mut().find(|f| f.name == name) {
            Some(f) => *f = entry,
            None => self.files.push(entry),
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST), text + "\n").map_err(CliError::io("writing manifest"))
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(CliError::io(format!("reading {}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    /// Names of listed files that are missing or whose checksum differs.
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| match sha256_file(&dir.join(&f.name)) {
                Ok((bytes, sum)) => bytes != f.bytes || sum != f.sha256,
                Err(_) => true,
            })
            .map(|f| f.name.clone())
            .collect()
    }
}

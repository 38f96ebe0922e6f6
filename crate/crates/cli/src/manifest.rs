//! Run manifests: the resolved command, its inputs and the digest of every
//! output. Manifests carry no timestamps so replays compare bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{GlobalConfig, Resolved};
use crate::error::CliError;

pub const RUN_MANIFEST: &str = "run.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path relative to the run directory for outputs; absolute for inputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub global: GlobalConfig,
    pub config: Resolved,
    /// SHA-256 of the canonical JSON of `global` and `config`.
    pub config_hash: String,
    /// Content hash of the dataset read, if any.
    pub data_hash: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn config_hash(global: &GlobalConfig, config: &Resolved) -> String {
    let canonical = serde_json::to_vec(&(global, config)).expect("configs serialize");
    hex::encode(Sha256::digest(&canonical))
}

/// What a command read and wrote.
#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub data_hash: Option<String>,
    pub inputs: Vec<PathBuf>,
    /// Files written, relative to the run directory.
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn build(global: &GlobalConfig, config: &Resolved, out: &Path, record: &RunRecord) -> Result<Self, CliError> {
        let mut outputs = record
            .outputs
            .iter()
            .map(|rel| {
                Ok(FileDigest {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    sha256: sha256_file(&out.join(rel))?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        outputs.dedup();
        let inputs = record
            .inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(RunManifest {
            manifest_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: config.name().to_string(),
            seed: global.seed,
            global: global.clone(),
            config: config.clone(),
            config_hash: config_hash(global, config),
            data_hash: record.data_hash.clone(),
            inputs,
            outputs,
        })
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let path = out.join(RUN_MANIFEST);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{} is not a run manifest: {e}", path.display())))?;
        if m.manifest_version > MANIFEST_VERSION {
            return Err(CliError::config(format!(
                "manifest version {} is newer than this build ({MANIFEST_VERSION})",
                m.manifest_version
            )));
        }
        if config_hash(&m.global, &m.config) != m.config_hash {
            return Err(CliError::config("manifest config hash does not match its contents"));
        }
        Ok(m)
    }

    /// Differences between the recorded run and a replay of it.
    pub fn differences(&self, replay: &RunManifest) -> Vec<String> {
        let mut diffs = Vec::new();
        if self.data_hash != replay.data_hash {
            diffs.push(format!("data hash {:?} became {:?}", self.data_hash, replay.data_hash));
        }
        for a in &self.inputs {
            match replay.inputs.iter().find(|b| b.path == a.path) {
                Some(b) if b.sha256 == a.sha256 => {}
                _ => diffs.push(format!("input {} changed", a.path)),
            }
        }
        for a in &self.outputs {
            match replay.outputs.iter().find(|b| b.path == a.path) {
                Some(b) if b.sha256 == a.sha256 => {}
                Some(_) => diffs.push(format!("output {} differs", a.path)),
                None => diffs.push(format!("output {} missing", a.path)),
            }
        }
        for b in &replay.outputs {
            if !self.outputs.iter().any(|a| a.path == b.path) {
                diffs.push(format!("unexpected output {}", b.path));
            }
        }
        diffs
    }
}

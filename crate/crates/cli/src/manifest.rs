//! `run_manifest.json`: one entry per executed subcommand with the digests
//! of everything it read and wrote. Entries carry no timestamps, so a
//! replay with the same inputs and seed yields the same manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub seed: u64,
    /// SHA-256 of the subcommand arguments as JSON.
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Executed stages in order; re-running a stage replaces its entry.
    pub stages: Vec<StageEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest, Failure> {
    let bytes = std::fs::read(path)?;
    Ok(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

/// Records a stage in the manifest at `manifest`, creating it if needed.
pub fn record_stage(
    manifest: &Path,
    stage: &str,
    seed: u64,
    config: &serde_json::Value,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<(), Failure> {
    let mut m = if manifest.exists() {
        serde_json::from_str(&std::fs::read_to_string(manifest)?)?
    } else {
        RunManifest { tool_version: env!("CARGO_PKG_VERSION").to_string(), stages: Vec::new() }
    };
    let entry = StageEntry {
        stage: stage.to_string(),
        seed,
        config_hash: sha256_hex(config.to_string().as_bytes()),
        inputs: inputs.iter().map(|p| digest_file(p)).collect::<Result<_, _>>()?,
        outputs: outputs.iter().map(|p| digest_file(p)).collect::<Result<_, _>>()?,
    };
    m.stages.retain(|s| s.stage != stage);
    m.stages.push(entry);
    if let Some(parent) = manifest.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(manifest, serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}

//! `<artifact>.provenance.json` sidecars.
//!
//! Sidecars hold no timestamps or absolute paths, so identical runs write
//! identical sidecars.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gazesal_core::util::write_atomic;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub command: String,
    pub sha256: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    /// Named input digests (manifest, fixations, registry, ...).
    pub inputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let name = artifact.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    artifact.with_file_name(format!("{name}.provenance.json"))
}

/// Writes `bytes` to `path` atomically, then its sidecar.
pub fn write_with_provenance(
    path: &Path,
    bytes: &[u8],
    command: &str,
    cfg: &RunConfig,
    inputs: BTreeMap<String, String>,
) -> Result<(), CliError> {
    write_atomic(path, bytes)?;
    write_sidecar(path, bytes, command, cfg, inputs)
}

/// Sidecar for an artifact already on disk with contents `bytes`.
pub fn write_sidecar(
    path: &Path,
    bytes: &[u8],
    command: &str,
    cfg: &RunConfig,
    inputs: BTreeMap<String, String>,
) -> Result<(), CliError> {
    let p = Provenance {
        artifact: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        command: command.to_string(),
        sha256: sha256_hex(bytes),
        config_hash: cfg.hash(),
        seed: cfg.seed()?,
        tool_version: TOOL_VERSION.to_string(),
        inputs,
    };
    let json = serde_json::to_string_pretty(&p).expect("provenance serializes");
    write_atomic(&sidecar_path(path), json.as_bytes())?;
    Ok(())
}

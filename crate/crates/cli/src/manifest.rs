//! Run manifests and atomic artifact output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::Artifacts;
use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const TOOL: &str = "photonkit";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Digest of the TOML rendering of `config`.
    pub config_sha256: String,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_inputs(paths: &[PathBuf]) -> Result<Vec<FileDigest>, CliError> {
    paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).map_err(|e| CliError::Invalid(format!("input = {}: {e}", p.display())))?;
            Ok(FileDigest { path: p.display().to_string(), sha256: sha256_hex(&bytes) })
        })
        .collect()
}

impl Manifest {
    pub fn new(cfg: &RunConfig, inputs: Vec<FileDigest>, artifacts: &Artifacts) -> Self {
        Manifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: cfg.command.map(|c| c.name()).unwrap_or_default().into(),
            seed: cfg.seed,
            config_sha256: sha256_hex(cfg.to_toml().as_bytes()),
            config: cfg.clone(),
            inputs,
            outputs: artifacts.files.iter().map(|(n, b)| FileDigest { path: n.clone(), sha256: sha256_hex(b) }).collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("manifest = {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("manifest = {}: {e}", path.display())))
    }

    /// Refuse to replay when an input file changed since the recorded run.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        for d in &self.inputs {
            let bytes = std::fs::read(&d.path).map_err(|e| CliError::Invalid(format!("input = {}: {e}", d.path)))?;
            let now = sha256_hex(&bytes);
            if now != d.sha256 {
                return Err(CliError::Invalid(format!("input = {}: sha256 {now} differs from recorded {}", d.path, d.sha256)));
            }
        }
        Ok(())
    }
}

/// Write `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.join(name).display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_run(dir: &Path, artifacts: &Artifacts, manifest: &Manifest) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("out = {}: {e}", dir.display())))?;
    for (name, bytes) in &artifacts.files {
        write_atomic(dir, name, bytes)?;
    }
    let mut m = serde_json::to_vec_pretty(manifest).map_err(|e| CliError::Io(e.to_string()))?;
    m.push(b'\n');
    write_atomic(dir, MANIFEST_NAME, &m)
}

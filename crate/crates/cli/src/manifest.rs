use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub eqv2i_version: String,
    pub matrix_format: String,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest-{command}.toml")
}

/// Hash the listed files in `out` and write the manifest next to them.
pub fn write_manifest(out: &Path, command: &str, seed: u64, config_toml: &str, files: &[String]) -> Result<()> {
    let mut entries = Vec::with_capacity(files.len());
    for name in files {
        let bytes = std::fs::read(out.join(name))?;
        entries.push(FileEntry { name: name.clone(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
    }
    let m = Manifest {
        command: command.to_string(),
        seed,
        config_sha256: sha256_hex(config_toml.as_bytes()),
        eqv2i_version: env!("CARGO_PKG_VERSION").to_string(),
        matrix_format: "EQM1".to_string(),
        files: entries,
    };
    let text = toml::to_string(&m).map_err(|e| CliError::runtime(format!("manifest: {e}")))?;
    std::fs::write(out.join(manifest_name(command)), text)?;
    Ok(())
}

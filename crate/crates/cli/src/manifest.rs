//! Reproducibility manifest: config hash, seed, versions and a digest of
//! every artifact in the output directory.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{LoadedConfig, SCHEMA_VERSION};
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// SHA-256 of the normalized config, without its output directory.
    pub config_sha256: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    /// Relative path (with `/` separators) to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(cfg: &LoadedConfig) -> Result<String, CliError> {
    let mut value = serde_json::to_value(&cfg.config)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("output_dir");
    }
    Ok(sha256_hex(&serde_json::to_vec(&value)?))
}

fn collect(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
            continue;
        }
        let rel = path.strip_prefix(root).expect("walked from root");
        let rel: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        let rel = rel.join("/");
        if rel == MANIFEST_FILE {
            continue;
        }
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        out.insert(rel, sha256_hex(&bytes));
    }
    Ok(())
}

pub fn build(cfg: &LoadedConfig, root: &Path) -> Result<Manifest, CliError> {
    let mut artifacts = BTreeMap::new();
    collect(root, root, &mut artifacts)?;
    let versions = BTreeMap::from([
        ("sparseload".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("schema".to_string(), SCHEMA_VERSION.to_string()),
        ("model_schema".to_string(), sparseload_core::models::MODEL_SCHEMA_VERSION.to_string()),
    ]);
    Ok(Manifest {
        schema_version: SCHEMA_VERSION,
        config_sha256: config_hash(cfg)?,
        seed: cfg.config.seed,
        versions,
        artifacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_input() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}

//! Per-stage manifests: SHA-256 of every output file plus the config hash
//! and seeds that produced them. No timestamps, so reruns compare equal.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arrayfile::write_bytes;
use crate::config::Seeds;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_sha256: String,
    pub seeds: Seeds,
    /// Hashes of upstream manifests this stage read.
    pub inputs: BTreeMap<String, String>,
    /// Output paths relative to the output root, with their hashes.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("hashing {}", path.display()), e))?;
    Ok(sha256_bytes(&bytes))
}

impl Manifest {
    pub fn new(stage: &str, config_sha256: &str, seeds: &Seeds) -> Self {
        Self {
            stage: stage.to_string(),
            config_sha256: config_sha256.to_string(),
            seeds: seeds.clone(),
            inputs: BTreeMap::new(),
            files: BTreeMap::new(),
        }
    }

    /// Records `rel` (relative to `root`) with its current hash.
    pub fn add(&mut self, root: &Path, rel: &str) -> CliResult<()> {
        let h = sha256_file(&root.join(rel))?;
        self.files.insert(rel.to_string(), h);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_bytes(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Corrupt {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// Re-hashes every listed file and reports the first mismatch.
    pub fn verify(&self, root: &Path) -> CliResult<()> {
        for (rel, h) in &self.files {
            let now = sha256_file(&root.join(rel))?;
            if &now != h {
                return Err(CliError::Corrupt {
                    path: rel.clone(),
                    detail: "hash differs from manifest".into(),
                });
            }
        }
        Ok(())
    }
}

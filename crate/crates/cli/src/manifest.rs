use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Reproduction record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    /// SHA-256 over the sorted input digests.
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub settings: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: Option<u64>) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_hash: String::new(),
            inputs: BTreeMap::new(),
            settings: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(
            path.display().to_string(),
            hex::encode(Sha256::digest(&bytes)),
        );
        Ok(())
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) {
        self.settings.insert(key.to_string(), value.to_string());
    }

    pub fn write(mut self, path: PathBuf) -> Result<()> {
        let mut h = Sha256::new();
        for (k, v) in &self.inputs {
            h.update(k.as_bytes());
            h.update(v.as_bytes());
        }
        for (k, v) in &self.settings {
            h.update(k.as_bytes());
            h.update(v.as_bytes());
        }
        self.config_hash = hex::encode(h.finalize());
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

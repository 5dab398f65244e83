use std::collections::BTreeMap;
use std::path::Path;
use std::time::SystemTime;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn now() -> String {
    DateTime::<Utc>::from(SystemTime::now()).to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Everything needed to reproduce a command's outputs. Apart from the
/// timestamps, equal manifests imply byte-identical outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub versions: BTreeMap<String, String>,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

impl Manifest {
    pub fn start(command: &str, effective_config: &str, seed: Option<u64>) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("volcast".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Manifest {
            command: command.to_string(),
            versions,
            config_sha256: sha256_hex(effective_config.as_bytes()),
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_at: now(),
            finished_at: String::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    /// Digests each output (relative to `dir`) and writes `manifest.json`.
    pub fn finish(mut self, dir: &Path, outputs: &[String]) -> Result<(), CliError> {
        for rel in outputs {
            self.outputs.insert(rel.clone(), file_digest(&dir.join(rel))?);
        }
        self.finished_at = now();
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self).expect("manifest serialises") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

//! Run manifest: config hash, stage timings and produced files.

use super::cache::sha256_hex;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
    /// The stage was served from the cache.
    pub cached: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProducedFile {
    /// Path relative to the output directory.
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub selector: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub stages: Vec<StageTiming>,
    pub files: Vec<ProducedFile>,
    pub checks: Vec<CheckRecord>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&CheckRecord> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn file(&self, name: &str) -> Option<&ProducedFile> {
        self.files.iter().find(|f| f.name == name)
    }

    pub fn stage(&self, name: &str) -> Option<&StageTiming> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Re-hash every listed file under `out_dir`.
    pub fn verify(&self, out_dir: &Path) -> Result<()> {
        for f in &self.files {
            let bytes = std::fs::read(out_dir.join(&f.name))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(Error::CacheCorrupted(format!("{} does not match its manifest hash", f.name)));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Format(e.to_string()))
    }
}

//! Run manifests: everything needed to reproduce a run, written next to its
//! outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::options::input_error;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    /// Which subcommand produced the outputs.
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Every resolved option, flat, exactly as a config file would spell it.
    pub options: BTreeMap<String, String>,
    /// Input files by role (`data`, `traces`).
    pub inputs: BTreeMap<String, Vec<String>>,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, options: BTreeMap<String, String>) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            options,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            elapsed_seconds: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).context("serialize manifest")?;
        std::fs::write(&path, text + "\n")
            .with_context(|| format!("write {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return input_error(format!("cannot read manifest {}: {e}", path.display())),
        };
        match serde_json::from_str(&text) {
            Ok(m) => Ok(m),
            Err(e) => input_error(format!("malformed manifest {}: {e}", path.display())),
        }
    }
}

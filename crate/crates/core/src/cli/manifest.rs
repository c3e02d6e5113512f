use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::Result;

/// Record of one command invocation, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Resolved configuration; absent when it could not be parsed.
    pub config: Option<RunConfig>,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub wall_clock_s: f64,
    pub results: serde_json::Map<String, serde_json::Value>,
    pub checks: BTreeMap<String, bool>,
    pub warnings: Vec<String>,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config: None,
            started: 0.0,
            wall_clock_s: 0.0,
            results: serde_json::Map::new(),
            checks: BTreeMap::new(),
            warnings: Vec::new(),
            artifacts: Vec::new(),
            exit_code: 0,
            error: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("manifest.json"), self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(dir.join("manifest.json"))?)
    }

    /// Failed check names, in order.
    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|(_, ok)| !**ok)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

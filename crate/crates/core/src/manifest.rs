//! `manifest.txt`: a JSON object with sorted keys describing one run.
//!
//! The `spec` entry holds every resolved setting as text, so a run can be
//! repeated from its manifest alone.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::error::{Error, Result};
use crate::verdict::Verdict;

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub spec: Settings,
    pub code_version: String,
    pub wall_time_s: f64,
    pub workers: usize,
    /// Replicates dropped, by reason.
    pub discards: BTreeMap<String, u64>,
    /// File names of the tables written alongside.
    pub tables: Vec<String>,
    pub verdicts: Vec<Verdict>,
}

impl Manifest {
    /// Pretty JSON; object keys come out sorted because the value tree uses
    /// ordered maps.
    pub fn render(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(|e| Error::config(format!("manifest: {e}")))?;
        let mut s = serde_json::to_string_pretty(&value).map_err(|e| Error::config(format!("manifest: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()?).map_err(|e| Error::io(path, e))
    }

    /// Settings that reproduce the run, including the experiment name.
    pub fn settings(&self) -> Settings {
        let mut s = self.spec.clone();
        s.insert("experiment".to_string(), self.experiment.clone());
        s
    }
}

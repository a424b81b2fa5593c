//! `manifest.json`: what a command read, what it wrote and when.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use turbopinn::data::{CaseDataset, Provenance};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub name: String,
    pub re: f64,
    pub source: Provenance,
}

impl CaseRecord {
    pub fn of(c: &CaseDataset) -> Self {
        Self {
            name: c.name.clone(),
            re: c.re,
            source: c.provenance.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// SHA-256 of the resolved config written next to the manifest.
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub cases: Vec<CaseRecord>,
    pub artifacts: Vec<Artifact>,
    pub status: String,
    pub started_at: String,
    pub finished_at: Option<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: None,
            seed: None,
            cases: Vec::new(),
            artifacts: Vec::new(),
            status: "running".to_string(),
            started_at: now(),
            finished_at: None,
        }
    }

    pub fn add(&mut self, kind: &str, path: impl Into<PathBuf>) {
        self.artifacts.push(Artifact {
            kind: kind.to_string(),
            path: path.into(),
        });
    }

    /// Stamps the finish time and writes the manifest into `dir`.
    pub fn finish(&mut self, dir: &Path, status: &str) -> Result<PathBuf, CliError> {
        if let Some(p) = self.missing(dir).first() {
            return Err(CliError::Io(format!(
                "{}: listed in the manifest but not written",
                p.display()
            )));
        }
        self.status = status.to_string();
        self.finished_at = Some(now());
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// Listed artifacts that do not exist under `dir`.
    pub fn missing(&self, dir: &Path) -> Vec<PathBuf> {
        self.artifacts
            .iter()
            .map(|a| dir.join(&a.path))
            .filter(|p| !p.exists())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "x\n").unwrap();
        let mut m = RunManifest::start("train");
        m.seed = Some(4);
        m.add("curve", "a.csv");
        let path = m.finish(dir.path(), "ok").unwrap();
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(back.finished_at.unwrap() >= back.started_at);
    }

    #[test]
    fn refuses_to_list_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::start("train");
        m.add("checkpoint", "gone.ckpt");
        assert_eq!(m.missing(dir.path()), vec![dir.path().join("gone.ckpt")]);
        assert!(matches!(m.finish(dir.path(), "ok"), Err(CliError::Io(_))));
    }
}

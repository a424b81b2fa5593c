//! Run configuration files.
//!
//! A run file names the cases to train on, the network shape and the
//! training schedule. One top-level `seed` drives network initialization,
//! data splits and batch sampling alike.
//!
//! ```toml
//! name = "vortex"
//! seed = 0
//!
//! [network]
//! hidden = [32, 32, 32]
//! n_freq = 6
//!
//! [train]
//! main_steps = 3000
//!
//! [[cases]]
//! name = "vortex-4200"
//! [cases.source]
//! kind = "mms"
//! family = "trig-vortex"
//! s = 4200.0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use turbopinn::autodiff::Activation;
use turbopinn::data::{CaseConfig, CaseDataset};
use turbopinn::network::{InputMode, NetworkConfig};
use turbopinn::trainer::{input_bounds, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    pub n_freq: usize,
    pub activation: Activation,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let d = NetworkConfig::default();
        Self {
            hidden: d.hidden,
            n_freq: d.n_freq,
            activation: d.activation,
        }
    }
}

impl NetworkSection {
    /// Full network config for `cases`: parametric in Re when there is
    /// more than one case, with input ranges covering them all.
    pub fn for_cases(&self, cases: &[CaseDataset]) -> NetworkConfig {
        NetworkConfig {
            hidden: self.hidden.clone(),
            n_freq: self.n_freq,
            activation: self.activation,
            mode: if cases.len() > 1 {
                InputMode::ParametricRe
            } else {
                InputMode::FixedRe
            },
            bounds: input_bounds(cases),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { nx: 101, ny: 51 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub grid: GridSection,
    pub cases: Vec<CaseConfig>,
    /// Extra cases evaluated after a sweep, never trained on.
    #[serde(default)]
    pub eval_cases: Vec<CaseConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        if cfg.cases.is_empty() {
            return Err("at least one [[cases]] entry is required".into());
        }
        Ok(cfg)
    }

    /// Pushes the single seed into every consumer.
    pub fn resolve_seed(&mut self) {
        self.train.seed = self.seed;
        for c in self.cases.iter_mut().chain(self.eval_cases.iter_mut()) {
            c.split.seed = self.seed;
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Usage(format!("cannot serialize config: {e}")))
    }
}

/// Hex SHA-256 of `text`.
pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

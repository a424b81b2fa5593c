//! Checkpoint files.
//!
//! Layout (little endian):
//!
//! ```text
//! b"TPCK" | u32 version | u32 header_len | header JSON
//!         | f64 × n_params                      parameters
//!         | f64 × n_params | f64 × n_params     Adam moments, if present
//! ```
//!
//! Every float travels as raw bits, so a save/load round trip is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FieldNetworkSet, NetworkConfig, NetworkError};

const MAGIC: &[u8; 4] = b"TPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Optimizer state needed to resume training exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSnapshot {
    /// Training phase label (`pretrain` or `main`).
    pub phase: String,
    /// Steps completed in the phase.
    pub step: u64,
    /// Adam update counter.
    pub adam_t: u64,
    pub lambdas: Option<[f64; 4]>,
    /// Recent total losses feeding the convergence window.
    #[serde(default)]
    pub recent_totals: Vec<f64>,
    #[serde(skip)]
    pub m: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub params: Vec<f64>,
    pub optimizer: Option<OptimizerSnapshot>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    n_params: usize,
    optimizer: Option<OptimizerSnapshot>,
}

impl Checkpoint {
    pub fn of(set: &FieldNetworkSet) -> Self {
        Self {
            config: set.config().clone(),
            params: set.params(),
            optimizer: None,
        }
    }

    pub fn network(&self) -> Result<FieldNetworkSet, NetworkError> {
        FieldNetworkSet::from_params(self.config.clone(), &self.params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            n_params: self.params.len(),
            optimizer: self.optimizer.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + json.len() + 24 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        put(&self.params);
        if let Some(opt) = &self.optimizer {
            put(&opt.m);
            put(&opt.v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetworkError> {
        let bad = |msg: &str| NetworkError::Checkpoint(msg.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(NetworkError::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| NetworkError::Checkpoint(format!("header: {e}")))?;
        header.config.validate()?;
        let n = header.n_params;
        let mut cursor = &bytes[12 + hlen..];
        let mut take = |count: usize| -> Result<Vec<f64>, NetworkError> {
            if cursor.len() < count * 8 {
                return Err(bad("truncated parameter block"));
            }
            let (head, rest) = cursor.split_at(count * 8);
            cursor = rest;
            Ok(head
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let params = take(n)?;
        let optimizer = match header.optimizer {
            Some(mut opt) => {
                opt.m = take(n)?;
                opt.v = take(n)?;
                Some(opt)
            }
            None => None,
        };
        if !cursor.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let expected = header.config.params_per_net() * 5;
        if n != expected {
            return Err(NetworkError::ParamLength { expected, got: n });
        }
        Ok(Self {
            config: header.config,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::InputMode;

    fn cfg() -> NetworkConfig {
        NetworkConfig {
            hidden: vec![6, 5],
            n_freq: 2,
            mode: InputMode::ParametricRe,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let set = FieldNetworkSet::init(cfg(), 3).unwrap();
        let n = set.param_count();
        let mut ck = Checkpoint::of(&set);
        ck.optimizer = Some(OptimizerSnapshot {
            phase: "main".into(),
            step: 17,
            adam_t: 17,
            lambdas: Some([0.1 + 0.2, 1.0 / 3.0, 1e-300, 0.7]),
            recent_totals: vec![0.1, 1e-17, 2.0 / 3.0],
            m: (0..n).map(|i| (i as f64).sin() * 1e-7).collect(),
            v: (0..n).map(|i| (i as f64).cos().powi(2) * 1e-9).collect(),
        });
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let a: Vec<u64> = ck.params.iter().map(|x| x.to_bits()).collect();
        let b: Vec<u64> = back.params.iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.network().unwrap(), set);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let set = FieldNetworkSet::init(cfg(), 3).unwrap();
        let bytes = Checkpoint::of(&set).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}

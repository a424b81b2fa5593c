//! Loss composition: per-variable data losses, the boundary loss, and the
//! λ-weighted PDE loss.
//!
//! The functions here work on plain predictions and serve as the reference
//! definitions; [`tape`] records the same quantities differentiably for
//! training.

pub mod tape;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BoundaryTag, FieldSample};
use crate::network::FieldValues;
use crate::physics::ResidualBundle;

/// Guard added to residual means before inversion.
pub const LAMBDA_DELTA: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("empty {0} batch")]
    EmptyBatch(&'static str),
    #[error("{predictions} predictions for {samples} samples")]
    LengthMismatch { predictions: usize, samples: usize },
    #[error("boundary batch contains a point without a boundary tag ({0:?})")]
    UnknownTag(BoundaryTag),
    #[error("loss weights must be positive and finite, got {0:?}")]
    InvalidWeights([f64; 4]),
}

/// Which loss terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Data, boundary and PDE terms with logarithmic ε losses.
    #[default]
    None,
    /// Data loss only, in every phase.
    DataOnly,
    /// Full loss with plain MSE for ε in both the data and PDE terms.
    NoLogEps,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::DataOnly => "data-only",
            Ablation::NoLogEps => "no-log-eps",
        }
    }

    pub fn log_eps(self) -> bool {
        self != Ablation::NoLogEps
    }

    pub fn uses_physics(self) -> bool {
        self != Ablation::DataOnly
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Ablation::None),
            "data-only" => Ok(Ablation::DataOnly),
            "no-log-eps" => Ok(Ablation::NoLogEps),
            other => Err(format!(
                "unknown ablation `{other}` (expected none, data-only, no-log-eps)"
            )),
        }
    }
}

/// PDE component weights, in the order momentum, continuity, k, ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_mom: f64,
    pub lambda_cont: f64,
    pub lambda_k: f64,
    pub lambda_eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::from_array([1.0; 4])
    }
}

impl LossWeights {
    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            lambda_mom: a[0],
            lambda_cont: a[1],
            lambda_k: a[2],
            lambda_eps: a[3],
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.lambda_mom, self.lambda_cont, self.lambda_k, self.lambda_eps]
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let a = self.as_array();
        if a.iter().all(|l| l.is_finite() && *l > 0.0) {
            Ok(())
        } else {
            Err(LossError::InvalidWeights(a))
        }
    }
}

/// `λᵢ = 1/(mᵢ + δ)`, rescaled so the largest weight is one.
pub fn normalize_lambdas(means: [f64; 4]) -> LossWeights {
    let inv = means.map(|m| 1.0 / (m.max(0.0) + LAMBDA_DELTA));
    let max = inv.iter().cloned().fold(0.0, f64::max);
    LossWeights::from_array(inv.map(|l| l / max))
}

/// Per-variable data losses.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DataLoss {
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub k: f64,
    pub eps: f64,
}

impl DataLoss {
    pub fn as_array(&self) -> [f64; 5] {
        [self.u, self.v, self.p, self.k, self.eps]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

fn check_len(pred: usize, samples: usize, what: &'static str) -> Result<(), LossError> {
    if samples == 0 {
        return Err(LossError::EmptyBatch(what));
    }
    if pred != samples {
        return Err(LossError::LengthMismatch {
            predictions: pred,
            samples,
        });
    }
    Ok(())
}

/// MSE per variable. With `log_eps`, ε is compared as `log_eps` against
/// `ln ε_data`; otherwise as plain values.
pub fn data_loss(pred: &[FieldValues], samples: &[FieldSample], log_eps: bool) -> Result<DataLoss, LossError> {
    check_len(pred.len(), samples.len(), "data")?;
    let n = samples.len() as f64;
    let mut acc = [0.0; 5];
    for (f, s) in pred.iter().zip(samples) {
        let eps_err = if log_eps { f.log_eps - s.eps.ln() } else { f.eps - s.eps };
        let errs = [f.u - s.u, f.v - s.v, f.p - s.p, f.k - s.k, eps_err];
        for (a, e) in acc.iter_mut().zip(errs) {
            *a += e * e;
        }
    }
    Ok(DataLoss {
        u: acc[0] / n,
        v: acc[1] / n,
        p: acc[2] / n,
        k: acc[3] / n,
        eps: acc[4] / n,
    })
}

/// Network outputs at a boundary point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryPrediction {
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub du_dy: f64,
}

/// Boundary terms, each the mean over its tag's points.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BcLoss {
    pub inlet: f64,
    pub outlet: f64,
    pub wall: f64,
    pub symmetry: f64,
}

impl BcLoss {
    pub fn total(&self) -> f64 {
        self.inlet + self.outlet + self.wall + self.symmetry
    }
}

/// Squared boundary violation of one point, by tag:
/// inlet and wall `(u−u*)² + (v−v*)²`, outlet `(p−p*)²`,
/// symmetry `(v−v*)² + (∂u/∂y)²`.
pub fn bc_violation(pred: &BoundaryPrediction, s: &FieldSample) -> Result<f64, LossError> {
    let (du, dv, dp) = (pred.u - s.u, pred.v - s.v, pred.p - s.p);
    match s.tag {
        BoundaryTag::Inlet | BoundaryTag::Wall => Ok(du * du + dv * dv),
        BoundaryTag::Outlet => Ok(dp * dp),
        BoundaryTag::Symmetry => Ok(dv * dv + pred.du_dy * pred.du_dy),
        BoundaryTag::Interior => Err(LossError::UnknownTag(s.tag)),
    }
}

pub fn bc_loss(pred: &[BoundaryPrediction], samples: &[FieldSample]) -> Result<BcLoss, LossError> {
    check_len(pred.len(), samples.len(), "boundary")?;
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for (p, s) in pred.iter().zip(samples) {
        let e = bc_violation(p, s)?;
        let i = tag_slot(s.tag);
        sums[i] += e;
        counts[i] += 1;
    }
    let mean = |i: usize| {
        if counts[i] == 0 {
            0.0
        } else {
            sums[i] / counts[i] as f64
        }
    };
    Ok(BcLoss {
        inlet: mean(0),
        outlet: mean(1),
        wall: mean(2),
        symmetry: mean(3),
    })
}

pub(crate) fn tag_slot(tag: BoundaryTag) -> usize {
    match tag {
        BoundaryTag::Inlet => 0,
        BoundaryTag::Outlet => 1,
        BoundaryTag::Wall => 2,
        BoundaryTag::Symmetry | BoundaryTag::Interior => 3,
    }
}

/// Unweighted PDE loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PdeLoss {
    pub mom: f64,
    pub cont: f64,
    pub k: f64,
    pub eps: f64,
}

impl PdeLoss {
    pub fn as_array(&self) -> [f64; 4] {
        [self.mom, self.cont, self.k, self.eps]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            mom: a[0],
            cont: a[1],
            k: a[2],
            eps: a[3],
        }
    }

    pub fn weighted(&self, w: &LossWeights) -> f64 {
        self.as_array().iter().zip(w.as_array()).map(|(m, l)| m * l).sum()
    }
}

/// Loss of a single ε residual: `ln(1 + r²)` or `r²`.
pub fn eps_residual_loss(r: f64, log_eps: bool) -> f64 {
    if log_eps {
        (r * r).ln_1p()
    } else {
        r * r
    }
}

/// `mean(r_x² + r_y²)`, `mean(r_cont²)`, `mean(r_k²)` and the ε term.
pub fn pde_components(residuals: &[ResidualBundle<f64>], log_eps: bool) -> Result<PdeLoss, LossError> {
    if residuals.is_empty() {
        return Err(LossError::EmptyBatch("collocation"));
    }
    let n = residuals.len() as f64;
    let mut acc = [0.0; 4];
    for r in residuals {
        acc[0] += r.mom_x * r.mom_x + r.mom_y * r.mom_y;
        acc[1] += r.cont * r.cont;
        acc[2] += r.k * r.k;
        acc[3] += eps_residual_loss(r.eps, log_eps);
    }
    Ok(PdeLoss::from_array(acc.map(|a| a / n)))
}

/// Components and their λ-weighted sum.
pub fn pde_loss(
    residuals: &[ResidualBundle<f64>],
    w: &LossWeights,
    log_eps: bool,
) -> Result<(PdeLoss, f64), LossError> {
    let c = pde_components(residuals, log_eps)?;
    Ok((c, c.weighted(w)))
}

/// All loss terms of one evaluation. PDE entries are λ-weighted; the
/// `raw_*` fields hold the unweighted means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_data_u: f64,
    pub l_data_v: f64,
    pub l_data_p: f64,
    pub l_data_k: f64,
    pub l_data_eps: f64,
    pub l_bc: f64,
    pub l_mom: f64,
    pub l_cont: f64,
    pub l_k: f64,
    pub l_eps: f64,
    pub total: f64,
    pub raw_mom: f64,
    pub raw_cont: f64,
    pub raw_k: f64,
    pub raw_eps: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "l_data_u,l_data_v,l_data_p,l_data_k,l_data_eps,l_bc,\
        l_mom,l_cont,l_k,l_eps,total,raw_mom,raw_cont,raw_k,raw_eps";

    pub fn compose(data: &DataLoss, bc: f64, pde: &PdeLoss, w: &LossWeights) -> Self {
        let weighted = [
            pde.mom * w.lambda_mom,
            pde.cont * w.lambda_cont,
            pde.k * w.lambda_k,
            pde.eps * w.lambda_eps,
        ];
        let mut b = Self {
            l_data_u: data.u,
            l_data_v: data.v,
            l_data_p: data.p,
            l_data_k: data.k,
            l_data_eps: data.eps,
            l_bc: bc,
            l_mom: weighted[0],
            l_cont: weighted[1],
            l_k: weighted[2],
            l_eps: weighted[3],
            total: 0.0,
            raw_mom: pde.mom,
            raw_cont: pde.cont,
            raw_k: pde.k,
            raw_eps: pde.eps,
        };
        b.total = b.component_sum();
        b
    }

    /// Sum of the data, boundary and weighted PDE components.
    pub fn component_sum(&self) -> f64 {
        self.data_sum() + self.l_bc + self.l_mom + self.l_cont + self.l_k + self.l_eps
    }

    pub fn data_sum(&self) -> f64 {
        self.l_data_u + self.l_data_v + self.l_data_p + self.l_data_k + self.l_data_eps
    }

    pub fn pde_raw(&self) -> PdeLoss {
        PdeLoss::from_array([self.raw_mom, self.raw_cont, self.raw_k, self.raw_eps])
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub fn values(&self) -> [f64; 15] {
        [
            self.l_data_u,
            self.l_data_v,
            self.l_data_p,
            self.l_data_k,
            self.l_data_eps,
            self.l_bc,
            self.l_mom,
            self.l_cont,
            self.l_k,
            self.l_eps,
            self.total,
            self.raw_mom,
            self.raw_cont,
            self.raw_k,
            self.raw_eps,
        ]
    }

    /// Comma-separated values in [`Self::CSV_HEADER`] order, each printed
    /// in shortest round-trip form.
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        for (i, v) in self.values().iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{v:e}").expect("write to string");
        }
        s
    }
}

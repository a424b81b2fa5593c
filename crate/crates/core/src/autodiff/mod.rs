//! Exact derivatives for the training engine.
//!
//! Input derivatives (∇, ∇²) come from forward-mode [`Jet2`]s; parameter
//! gradients come from the reverse-mode [`Tape`]. The batched jet nodes on
//! the tape let a PDE-residual loss be differentiated with respect to the
//! network weights without approximation.

mod check;
mod jet;
mod tape;

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use check::{check_fd, FdReport};
pub use jet::{jet_arith, seed_inputs, sigmoid, softplus, Jet2, JetOp, MAX_DIM};
pub use tape::{comp, JetLayout, ParamAdjoints, Tape, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("active input set is empty")]
    EmptyActiveSet,
    #[error("{0} active inputs requested; at most 3 are supported")]
    TooManyActive(usize),
    #[error("active index {index} out of range for {len} coordinates")]
    ActiveOutOfRange { index: usize, len: usize },
    #[error("derivative domain error in {op}: {reason} (at {at})")]
    Domain {
        op: &'static str,
        reason: &'static str,
        at: f64,
    },
    #[error("backward root must be 1x1, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
    #[error("non-finite adjoint at node {node} ({op})")]
    NonFiniteAdjoint { node: usize, op: &'static str },
}

/// Smooth scalar maps with closed-form derivatives up to third order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sin,
    Softplus,
    Exp,
}

impl Activation {
    /// `[f, f', f'', f''']` at `x`.
    #[inline]
    pub fn derivs(self, x: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                let d1 = 1.0 - t * t;
                [t, d1, -2.0 * t * d1, d1 * (6.0 * t * t - 2.0)]
            }
            Activation::Sin => {
                let (s, c) = x.sin_cos();
                [s, c, -s, -c]
            }
            Activation::Softplus => {
                let s = sigmoid(x);
                let d2 = s * (1.0 - s);
                [softplus(x), s, d2, d2 * (1.0 - 2.0 * s)]
            }
            Activation::Exp => {
                let e = x.exp();
                [e, e, e, e]
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sin => "sin",
            Activation::Softplus => "softplus",
            Activation::Exp => "exp",
        }
    }

    /// Applies the activation to a jet.
    pub fn jet(self, j: &Jet2) -> Jet2 {
        match self {
            Activation::Tanh => j.tanh(),
            Activation::Sin => j.sin(),
            Activation::Softplus => j.softplus(),
            Activation::Exp => j.exp(),
        }
    }
}

/// Arithmetic shared by plain floats and tape variables, so the flow
/// residuals can be written once and evaluated either pointwise or as a
/// differentiable batch.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// `max(self, floor)`.
    fn floor_at(self, floor: f64) -> Self;
}

impl Real for f64 {
    #[inline]
    fn floor_at(self, floor: f64) -> Self {
        self.max(floor)
    }
}

/// Gradient of a scalar loss with respect to every trainable parameter,
/// in the flat layout of the network set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient(pub Vec<f64>);

impl ParamGradient {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

/// Reverse-mode gradient of a scalar root over `n_params` parameters.
pub fn reverse_grad(tape: &Tape, root: Var<'_>, n_params: usize) -> Result<ParamGradient, AutodiffError> {
    let adj = tape.backward(root)?;
    Ok(ParamGradient(adj.to_flat(n_params)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_third_derivatives_match_differences() {
        let h = 1e-5;
        for act in [Activation::Tanh, Activation::Sin, Activation::Softplus, Activation::Exp] {
            for &x in &[-1.3, -0.2, 0.0, 0.4, 2.1] {
                let d = act.derivs(x);
                for order in 0..3 {
                    let fd = (act.derivs(x + h)[order] - act.derivs(x - h)[order]) / (2.0 * h);
                    let err = (fd - d[order + 1]).abs() / d[order + 1].abs().max(1.0);
                    assert!(err < 1e-8, "{act:?} order {} at {x}: {err}", order + 1);
                }
            }
        }
    }

    #[test]
    fn real_floor_on_f64() {
        assert_eq!(1e-20f64.floor_at(1e-10), 1e-10);
        assert_eq!(2.0f64.floor_at(1e-10), 2.0);
    }
}

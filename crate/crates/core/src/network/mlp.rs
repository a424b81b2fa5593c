use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lane::Lane;
use crate::autodiff::{Activation, JetLayout, Tape, Var};

/// Map applied to the raw scalar output of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputTransform {
    Identity,
    Softplus,
    Exp,
}

impl OutputTransform {
    pub fn activation(self) -> Option<Activation> {
        match self {
            OutputTransform::Identity => None,
            OutputTransform::Softplus => Some(Activation::Softplus),
            OutputTransform::Exp => Some(Activation::Exp),
        }
    }
}

/// Fully connected network with a scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Input width, hidden widths, then 1.
    sizes: Vec<usize>,
    /// `weights[l]` is `sizes[l] × sizes[l+1]`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activation: Activation,
    transform: OutputTransform,
}

/// Tape handles for one network's parameters.
pub struct MlpVars<'t> {
    pub(crate) layers: Vec<(Var<'t>, Var<'t>)>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng>(
        input: usize,
        hidden: &[usize],
        activation: Activation,
        transform: OutputTransform,
        rng: &mut R,
    ) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Self {
            sizes,
            weights,
            biases,
            activation,
            transform,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn transform(&self) -> OutputTransform {
        self.transform
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        Self::count_for(&self.sizes)
    }

    /// `Σ (wᵢ·wᵢ₊₁ + wᵢ₊₁)` over consecutive layer widths.
    pub fn count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// Appends parameters in layout order: per layer, weights row-major,
    /// then biases.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }

    /// Reads parameters from the front of `src`, returning the rest.
    pub fn read_params<'a>(&mut self, mut src: &'a [f64]) -> &'a [f64] {
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let (head, rest) = src.split_at(w.len());
            w.iter_mut().zip(head).for_each(|(d, s)| *d = *s);
            src = rest;
            let (head, rest) = src.split_at(b.len());
            b.iter_mut().zip(head).for_each(|(d, s)| *d = *s);
            src = rest;
        }
        src
    }

    /// Raw (pre-transform) output at one point.
    pub(crate) fn eval_raw<L: Lane>(&self, input: &[L]) -> L {
        let mut x: Vec<L> = input.to_vec();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut next = Vec::with_capacity(w.ncols());
            for j in 0..w.ncols() {
                let mut acc = L::constant(b[j], &x[0]);
                for (i, xi) in x.iter().enumerate() {
                    acc = acc.axpy(w[[i, j]], xi);
                }
                next.push(if l < last { acc.act(self.activation) } else { acc });
            }
            x = next;
        }
        x[0]
    }

    pub(crate) fn apply_transform<L: Lane>(&self, raw: &L) -> L {
        match self.transform.activation() {
            Some(act) => raw.act(act),
            None => *raw,
        }
    }

    /// Value-only raw outputs for a batch of embedded rows.
    pub(crate) fn eval_raw_batch(&self, input: &Array2<f64>) -> Array1<f64> {
        let last = self.weights.len() - 1;
        let mut x = input.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = x.dot(w);
            z += &b.view().insert_axis(Axis(0));
            if l < last {
                let act = self.activation;
                z.mapv_inplace(|v| act.derivs(v)[0]);
            }
            x = z;
        }
        x.column(0).to_owned()
    }

    pub(crate) fn register<'t>(&self, tape: &'t Tape, mut offset: usize) -> MlpVars<'t> {
        let mut layers = Vec::with_capacity(self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let wv = tape.param(w.clone(), offset);
            offset += w.len();
            let bv = tape.param(b.clone().insert_axis(Axis(0)), offset);
            offset += b.len();
            layers.push((wv, bv));
        }
        MlpVars { layers }
    }

    /// Raw output jets of a stacked embedded batch, recorded on the tape.
    pub(crate) fn tape_raw<'t>(
        &self,
        vars: &MlpVars<'t>,
        embedded: Var<'t>,
        layout: JetLayout,
        batch: usize,
    ) -> Var<'t> {
        let last = vars.layers.len() - 1;
        let mut x = embedded;
        for (l, (w, b)) in vars.layers.iter().enumerate() {
            x = x.jet_linear(*w, *b, batch);
            if l < last {
                x = x.jet_activate(self.activation, layout, batch);
            }
        }
        x
    }
}

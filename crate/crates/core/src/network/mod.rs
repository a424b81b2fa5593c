//! Per-variable coordinate networks.
//!
//! Five independent MLPs (u, v, p, k, ε) read the same Fourier-feature
//! embedding of `(x, y)` or `(x, y, Re)`. Positivity of k and ε is built into
//! the output transforms: k passes through softplus, and the ε network
//! predicts `ln ε` which is exponentiated.

mod checkpoint;
mod embedding;
mod lane;
mod mlp;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{seed_inputs, Activation, Jet2, JetLayout, Tape, Var};

pub use checkpoint::{Checkpoint, OptimizerSnapshot, CHECKPOINT_VERSION};
pub use embedding::{AxisRange, FourierEmbedding, INPUT_SPAN};
pub use mlp::{Mlp, MlpVars, OutputTransform};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network needs at least one hidden layer")]
    NoHiddenLayers,
    #[error("hidden layer {0} has zero width")]
    ZeroWidth(usize),
    #[error("number of Fourier frequencies must be at least 1")]
    ZeroFrequencies,
    #[error("input has {got} coordinates, network expects {expected}")]
    DimensionMismatch { expected: &'static str, got: usize },
    #[error("parameter vector has length {got}, network has {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The five predicted fields, in parameter-layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    U,
    V,
    P,
    K,
    Eps,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::U, Field::V, Field::P, Field::K, Field::Eps];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::U => "u",
            Field::V => "v",
            Field::P => "p",
            Field::K => "k",
            Field::Eps => "eps",
        }
    }

    pub fn transform(self) -> OutputTransform {
        match self {
            Field::U | Field::V | Field::P => OutputTransform::Identity,
            Field::K => OutputTransform::Softplus,
            Field::Eps => OutputTransform::Exp,
        }
    }
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    FixedRe,
    ParametricRe,
}

impl InputMode {
    pub fn n_inputs(self) -> usize {
        match self {
            InputMode::FixedRe => 2,
            InputMode::ParametricRe => 3,
        }
    }
}

/// Raw input ranges that the embedding maps onto its working interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub x: AxisRange,
    pub y: AxisRange,
    /// Reynolds-number range; only read in parametric mode.
    pub re: AxisRange,
}

impl Default for InputBounds {
    fn default() -> Self {
        Self {
            x: AxisRange::unit(),
            y: AxisRange::unit(),
            re: AxisRange::unit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub n_freq: usize,
    pub activation: Activation,
    pub mode: InputMode,
    #[serde(default)]
    pub bounds: InputBounds,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64; 4],
            n_freq: 10,
            activation: Activation::Tanh,
            mode: InputMode::FixedRe,
            bounds: InputBounds::default(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.hidden.is_empty() {
            return Err(NetworkError::NoHiddenLayers);
        }
        if let Some(i) = self.hidden.iter().position(|&w| w == 0) {
            return Err(NetworkError::ZeroWidth(i));
        }
        if self.n_freq == 0 {
            return Err(NetworkError::ZeroFrequencies);
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.n_freq * self.mode.n_inputs()
    }

    /// Parameters of a single field network.
    pub fn params_per_net(&self) -> usize {
        let mut sizes = vec![self.embedding_dim()];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(1);
        Mlp::count_for(&sizes)
    }
}

/// Field values at a point. `log_eps` is the ε network's native output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValues {
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub k: f64,
    pub eps: f64,
    pub log_eps: f64,
}

impl FieldValues {
    pub fn get(&self, field: Field) -> f64 {
        match field {
            Field::U => self.u,
            Field::V => self.v,
            Field::P => self.p,
            Field::K => self.k,
            Field::Eps => self.eps,
        }
    }
}

/// Field jets with respect to `(x, y)` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJets {
    pub u: Jet2,
    pub v: Jet2,
    pub p: Jet2,
    pub k: Jet2,
    pub eps: Jet2,
    pub log_eps: Jet2,
}

impl FieldJets {
    pub fn get(&self, field: Field) -> &Jet2 {
        match field {
            Field::U => &self.u,
            Field::V => &self.v,
            Field::P => &self.p,
            Field::K => &self.k,
            Field::Eps => &self.eps,
        }
    }
}

/// Tape handles for the whole set.
pub struct SetVars<'t> {
    nets: Vec<MlpVars<'t>>,
}

/// Stacked jets of one field on the tape: the raw network output and its
/// transformed value.
#[derive(Clone, Copy)]
pub struct StackedField<'t> {
    pub raw: Var<'t>,
    pub out: Var<'t>,
    pub layout: JetLayout,
    pub batch: usize,
}

impl<'t> StackedField<'t> {
    /// Component block of the transformed output.
    pub fn comp(&self, c: usize) -> Var<'t> {
        self.out.component(c, self.batch)
    }

    pub fn raw_comp(&self, c: usize) -> Var<'t> {
        self.raw.component(c, self.batch)
    }
}

/// The five field networks sharing one embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldNetworkSet {
    config: NetworkConfig,
    embedding: FourierEmbedding,
    nets: Vec<Mlp>,
}

impl FieldNetworkSet {
    /// Deterministic Glorot-uniform initialization from `seed`.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self, NetworkError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = Self::embedding_for(&config);
        let nets = Field::ALL
            .iter()
            .map(|f| {
                Mlp::glorot(
                    embedding.output_dim(),
                    &config.hidden,
                    config.activation,
                    f.transform(),
                    &mut rng,
                )
            })
            .collect();
        Ok(Self {
            config,
            embedding,
            nets,
        })
    }

    /// The Re axis is mapped onto `[0, INPUT_SPAN / n_freq]`, so even the
    /// highest frequency spans at most half a cycle over the training cases.
    /// With only a handful of Reynolds numbers seen, wider spans let upper
    /// features alias to constants at every training case and swing freely
    /// between them.
    fn embedding_for(config: &NetworkConfig) -> FourierEmbedding {
        let mut ranges = vec![config.bounds.x, config.bounds.y];
        let mut spans = vec![INPUT_SPAN; 2];
        if config.mode == InputMode::ParametricRe {
            ranges.push(config.bounds.re);
            spans.push(INPUT_SPAN / config.n_freq as f64);
        }
        FourierEmbedding::integer_ladder_with_spans(config.n_freq, ranges, spans)
    }

    /// Builds a set from a config and a flat parameter vector.
    pub fn from_params(config: NetworkConfig, params: &[f64]) -> Result<Self, NetworkError> {
        let mut set = Self::init(config, 0)?;
        set.set_params(params)?;
        Ok(set)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn mode(&self) -> InputMode {
        self.config.mode
    }

    pub fn embedding(&self) -> &FourierEmbedding {
        &self.embedding
    }

    pub fn net(&self, field: Field) -> &Mlp {
        &self.nets[field.index()]
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(Mlp::param_count).sum()
    }

    /// Flat index range of one field network's parameters.
    pub fn param_range(&self, field: Field) -> std::ops::Range<usize> {
        let start: usize = self.nets[..field.index()].iter().map(Mlp::param_count).sum();
        start..start + self.nets[field.index()].param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for net in &self.nets {
            net.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NetworkError> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(NetworkError::ParamLength {
                expected,
                got: params.len(),
            });
        }
        let mut rest = params;
        for net in &mut self.nets {
            rest = net.read_params(rest);
        }
        Ok(())
    }

    fn check_point(&self, point: &[f64]) -> Result<(), NetworkError> {
        match (self.config.mode, point.len()) {
            (InputMode::FixedRe, 2 | 3) | (InputMode::ParametricRe, 3) => Ok(()),
            (InputMode::FixedRe, got) => Err(NetworkError::DimensionMismatch {
                expected: "2 (x, y) or 3 (x, y, Re)",
                got,
            }),
            (InputMode::ParametricRe, got) => Err(NetworkError::DimensionMismatch {
                expected: "3 (x, y, Re)",
                got,
            }),
        }
    }

    /// Field values at `(x, y)` or `(x, y, Re)`. In fixed-Re mode a supplied
    /// Re is ignored.
    pub fn forward(&self, point: &[f64]) -> Result<FieldValues, NetworkError> {
        self.check_point(point)?;
        let inputs = &point[..self.embedding.n_inputs()];
        let features = self.embedding.embed(inputs);
        let raw: Vec<f64> = self.nets.iter().map(|n| n.eval_raw(&features)).collect();
        let out: Vec<f64> = self.nets.iter().zip(&raw).map(|(n, r)| n.apply_transform(r)).collect();
        Ok(FieldValues {
            u: out[0],
            v: out[1],
            p: out[2],
            k: out[3],
            eps: out[4],
            log_eps: raw[4],
        })
    }

    /// Field jets with respect to `(x, y)`. Values agree bitwise with
    /// [`forward`](Self::forward).
    pub fn forward_jets(&self, point: &[f64]) -> Result<FieldJets, NetworkError> {
        self.check_point(point)?;
        let inputs = &point[..self.embedding.n_inputs()];
        let jets = seed_inputs(inputs, &[0, 1]).expect("two spatial inputs");
        let features = self.embedding.embed(&jets);
        let raw: Vec<Jet2> = self.nets.iter().map(|n| n.eval_raw(&features)).collect();
        let out: Vec<Jet2> = self.nets.iter().zip(&raw).map(|(n, r)| n.apply_transform(r)).collect();
        Ok(FieldJets {
            u: out[0],
            v: out[1],
            p: out[2],
            k: out[3],
            eps: out[4],
            log_eps: raw[4],
        })
    }

    /// Batched value-only evaluation; `points[i] = [x, y, Re]`.
    pub fn predict_batch(&self, points: &[[f64; 3]]) -> Vec<FieldValues> {
        const CHUNK: usize = 2048;
        points
            .par_chunks(CHUNK)
            .flat_map_iter(|chunk| {
                let emb = self.embedding.embed_stacked(chunk, JetLayout::Value);
                let raw: Vec<_> = self.nets.iter().map(|n| n.eval_raw_batch(&emb)).collect();
                (0..chunk.len())
                    .map(|i| {
                        let t = |f: Field| self.nets[f.index()].apply_transform(&raw[f.index()][i]);
                        FieldValues {
                            u: t(Field::U),
                            v: t(Field::V),
                            p: t(Field::P),
                            k: t(Field::K),
                            eps: t(Field::Eps),
                            log_eps: raw[4][i],
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Registers all parameters on `tape` at their flat offsets.
    pub fn register<'t>(&self, tape: &'t Tape) -> SetVars<'t> {
        let mut offset = 0;
        let nets = self
            .nets
            .iter()
            .map(|n| {
                let vars = n.register(tape, offset);
                offset += n.param_count();
                vars
            })
            .collect();
        SetVars { nets }
    }

    /// Stacked embedding of a batch, as a constant on the tape.
    pub fn embed_on_tape<'t>(&self, tape: &'t Tape, points: &[[f64; 3]], layout: JetLayout) -> Var<'t> {
        tape.constant(self.embedding_stack(points, layout))
    }

    pub fn embedding_stack(&self, points: &[[f64; 3]], layout: JetLayout) -> Array2<f64> {
        self.embedding.embed_stacked(points, layout)
    }

    /// Records one field network over an embedded stack.
    pub fn tape_field<'t>(
        &self,
        field: Field,
        vars: &SetVars<'t>,
        embedded: Var<'t>,
        layout: JetLayout,
        batch: usize,
    ) -> StackedField<'t> {
        let net = &self.nets[field.index()];
        let raw = net.tape_raw(&vars.nets[field.index()], embedded, layout, batch);
        let out = match net.transform().activation() {
            Some(act) => raw.jet_activate(act, layout, batch),
            None => raw,
        };
        StackedField {
            raw,
            out,
            layout,
            batch,
        }
    }
}

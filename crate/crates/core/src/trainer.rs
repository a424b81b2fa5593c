//! Two-phase training: data-only pre-training, then the full loss with
//! λ-weighted PDE terms, both driven by Adam with a stepwise decaying rate.
//!
//! Every minibatch is drawn from an RNG seeded by `(seed, phase, step)`, so a
//! run is a pure function of its configuration and can be resumed exactly
//! from a checkpoint. Gradients over a batch are computed in a fixed number
//! of shards and summed in shard order, which keeps results independent of
//! the worker count.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{reverse_grad, AutodiffError, JetLayout, Tape, Var};
use crate::data::{BoundaryTag, CaseDataset, CollocationPoint, FieldSample};
use crate::loss::{self, tape as lt, Ablation, DataLoss, LossBreakdown, LossError, LossWeights, PdeLoss};
use crate::network::{
    AxisRange, Checkpoint, Field, FieldNetworkSet, InputBounds, InputMode, NetworkError, OptimizerSnapshot,
    StackedField,
};
use crate::physics::{self, FlowJets, FluidProps, ResidualBundle, TurbConstants};
use crate::report::{validation_errors, MetricsEntry, ReportError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training cases")]
    NoCases,
    #[error("case `{0}` has no data points")]
    EmptyData(String),
    #[error("case `{0}` has no collocation points")]
    EmptyCollocation(String),
    #[error("parametric training needs at least two cases, got {0}")]
    TooFewCases(usize),
    #[error("network input mode {mode:?} does not fit {cases} case(s)")]
    ModeMismatch { mode: InputMode, cases: usize },
    #[error("reference scales differ between cases `{0}` and `{1}`")]
    ScaleMismatch(String, String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("gradient length {got} does not match {expected} parameters")]
    GradientLength { got: usize, expected: usize },
    #[error("non-finite gradient; Adam step rejected")]
    NonFiniteGradient,
    #[error("non-finite loss at {phase} step {step}; last good parameters restored")]
    NonFinite { phase: Phase, step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchSizes {
    pub data: usize,
    pub collocation: usize,
    pub boundary: usize,
}

impl Default for BatchSizes {
    fn default() -> Self {
        Self {
            data: 512,
            collocation: 512,
            boundary: 256,
        }
    }
}

/// Stop when the mean total loss of the last `window` steps differs from
/// that of the preceding `window` steps by less than `tolerance`, relatively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convergence {
    pub window: usize,
    pub tolerance: f64,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            window: 500,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain_steps: usize,
    pub main_steps: usize,
    pub batch: BatchSizes,
    pub lr0: f64,
    pub decay: f64,
    pub decay_interval: usize,
    pub seed: u64,
    pub convergence: Option<Convergence>,
    /// Recompute λ every this many main steps; `None` calibrates once.
    pub renormalize_every: Option<usize>,
    pub ablation: Ablation,
    /// Record every n-th step in the loss curve.
    pub log_every: usize,
    /// Fixed number of gradient shards per batch.
    pub shards: usize,
    /// Threads evaluating shards; does not affect results.
    pub workers: usize,
    pub constants: TurbConstants,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pretrain_steps: 2000,
            main_steps: 20000,
            batch: BatchSizes::default(),
            lr0: 1e-3,
            decay: 0.95,
            decay_interval: 1000,
            seed: 0,
            convergence: Some(Convergence::default()),
            renormalize_every: None,
            ablation: Ablation::None,
            log_every: 1,
            shards: 1,
            workers: 1,
            constants: TurbConstants::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if self.decay_interval == 0 {
            return bad("decay_interval must be positive");
        }
        if self.batch.data == 0 || self.batch.collocation == 0 {
            return bad("data and collocation batch sizes must be positive");
        }
        if self.log_every == 0 || self.shards == 0 || self.workers == 0 {
            return bad("log_every, shards and workers must be positive");
        }
        if let Some(c) = self.convergence {
            if c.window == 0 || c.tolerance.is_nan() || c.tolerance < 0.0 {
                return bad("convergence window must be positive and tolerance nonnegative");
            }
        }
        if self.renormalize_every == Some(0) {
            return bad("renormalize_every must be positive");
        }
        Ok(())
    }
}

/// `lr0 · decay^⌊step / decay_interval⌋`.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * int_pow(cfg.decay, step / cfg.decay_interval)
}

/// Square-and-multiply power. `f64::powi` may give a different last bit
/// when the compiler folds it for a constant argument, which would make the
/// logged rate depend on inlining.
fn int_pow(mut base: f64, mut n: usize) -> f64 {
    let mut acc = 1.0;
    while n > 0 {
        if n & 1 == 1 {
            acc *= base;
        }
        n >>= 1;
        if n > 0 {
            base *= base;
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update. A non-finite gradient leaves both the
/// parameters and the state untouched.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64) -> Result<(), TrainError> {
    if grad.len() != params.len() || state.m.len() != params.len() {
        return Err(TrainError::GradientLength {
            got: grad.len(),
            expected: params.len(),
        });
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(TrainError::NonFiniteGradient);
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Main,
    Done,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Main => "main",
            Phase::Done => "done",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "pretrain" => Some(Phase::Pretrain),
            "main" => Some(Phase::Main),
            "done" => Some(Phase::Done),
            _ => None,
        }
    }

    fn stream(self) -> u64 {
        match self {
            Phase::Pretrain => 1 << 40,
            Phase::Main => 2 << 40,
            Phase::Done => 3 << 40,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One logged step. λ is zero while no PDE weights are in force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub phase: Phase,
    pub step: usize,
    pub lr: f64,
    pub lambdas: [f64; 4],
    pub loss: LossBreakdown,
}

pub const CURVE_HEADER_PREFIX: &str = "phase,step,lr,lambda_mom,lambda_cont,lambda_k,lambda_eps";

impl CurveRow {
    pub fn header() -> String {
        format!("{CURVE_HEADER_PREFIX},{}", LossBreakdown::CSV_HEADER)
    }

    pub fn csv_line(&self) -> String {
        let mut s = format!("{},{},{:e}", self.phase, self.step, self.lr);
        for l in self.lambdas {
            write!(s, ",{l:e}").expect("write to string");
        }
        s.push(',');
        s.push_str(&self.loss.csv_row());
        s
    }
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = CurveRow::header();
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<(), std::io::Error> {
    fs::write(path, curve_csv(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum StopReason {
    StepsExhausted,
    Converged { step: usize },
    NonFinite { phase: Phase, step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub pretrain_steps: usize,
    pub main_steps: usize,
    pub stop: StopReason,
    /// Main-phase step at which each λ set took effect.
    pub lambda_history: Vec<(usize, LossWeights)>,
    pub wall_clock_s: f64,
    pub final_loss: Option<LossBreakdown>,
    pub validation: Vec<MetricsEntry>,
    pub checkpoint_path: Option<PathBuf>,
    #[serde(skip)]
    pub curve: Vec<CurveRow>,
}

impl TrainReport {
    pub fn lambdas(&self) -> Option<LossWeights> {
        self.lambda_history.last().map(|(_, w)| *w)
    }
}

/// A minibatch: points with the Reynolds number and fluid properties of the
/// case they come from.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub data: Vec<(FieldSample, f64)>,
    pub collocation: Vec<(CollocationPoint, FluidProps)>,
    pub boundary: Vec<(FieldSample, f64)>,
    pub re_colloc: Vec<f64>,
}

/// `n` (case, index) draws. A single case is sampled without replacement
/// (all points, in order, when `n` covers it); several cases are mixed by
/// drawing the case uniformly, then a point uniformly within it.
fn draw(sizes: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let live: Vec<usize> = (0..sizes.len()).filter(|&c| sizes[c] > 0).collect();
    match live.as_slice() {
        [] => Vec::new(),
        [c] => {
            let len = sizes[*c];
            if n >= len {
                (0..len).map(|i| (*c, i)).collect()
            } else {
                rand::seq::index::sample(rng, len, n)
                    .into_iter()
                    .map(|i| (*c, i))
                    .collect()
            }
        }
        _ => (0..n)
            .map(|_| {
                let c = live[rng.random_range(0..live.len())];
                (c, rng.random_range(0..sizes[c]))
            })
            .collect(),
    }
}

fn batch_rng(seed: u64, phase: Phase, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase.stream() + step as u64);
    rng
}

/// Draws the batch for `(phase, step)`. Without physics only data points
/// are drawn.
pub fn sample_batch(cases: &[CaseDataset], cfg: &TrainConfig, phase: Phase, step: usize, physics: bool) -> Batch {
    let mut rng = batch_rng(cfg.seed, phase, step);
    let sizes = |f: &dyn Fn(&CaseDataset) -> usize| cases.iter().map(f).collect::<Vec<_>>();
    let data = draw(&sizes(&|c| c.data_points.len()), cfg.batch.data, &mut rng)
        .into_iter()
        .map(|(c, i)| (cases[c].data_points[i], cases[c].re))
        .collect();
    let mut batch = Batch {
        data,
        ..Batch::default()
    };
    if physics {
        for (c, i) in draw(&sizes(&|c| c.collocation_points.len()), cfg.batch.collocation, &mut rng) {
            batch.collocation.push((cases[c].collocation_points[i], cases[c].props));
            batch.re_colloc.push(cases[c].re);
        }
        if cfg.batch.boundary > 0 {
            batch.boundary = draw(&sizes(&|c| c.boundary_points.len()), cfg.batch.boundary, &mut rng)
                .into_iter()
                .map(|(c, i)| (cases[c].boundary_points[i], cases[c].re))
                .collect();
        }
    }
    batch
}

/// Loss values of one shard: data (5), boundary, unweighted PDE (4).
#[derive(Debug, Clone, Copy, Default)]
struct Terms([f64; 10]);

struct ShardInput<'a> {
    data: &'a [(FieldSample, f64)],
    colloc: &'a [(CollocationPoint, FluidProps)],
    re_colloc: &'a [f64],
    boundary: &'a [(FieldSample, f64)],
}

struct EvalContext<'a> {
    net: &'a FieldNetworkSet,
    n_data: usize,
    n_colloc: usize,
    tag_counts: [usize; 4],
    weights: Option<LossWeights>,
    log_eps: bool,
    consts: &'a TurbConstants,
}

fn coords<T>(pts: &[(T, f64)], xy: impl Fn(&T) -> (f64, f64)) -> Vec<[f64; 3]> {
    pts.iter()
        .map(|(p, re)| {
            let (x, y) = xy(p);
            [x, y, *re]
        })
        .collect()
}

fn fields_on<'t>(
    net: &FieldNetworkSet,
    vars: &crate::network::SetVars<'t>,
    emb: Var<'t>,
    layout: JetLayout,
    n: usize,
) -> [StackedField<'t>; 5] {
    Field::ALL.map(|f| net.tape_field(f, vars, emb, layout, n))
}

fn eval_shard(ctx: &EvalContext<'_>, input: &ShardInput<'_>) -> Result<(Terms, Vec<f64>), TrainError> {
    let net = ctx.net;
    let tape = Tape::new();
    let vars = net.register(&tape);
    let mut terms = Terms::default();
    let mut parts: Vec<Var<'_>> = Vec::new();

    if !input.data.is_empty() {
        let n = input.data.len();
        let pts = coords(input.data, |s| (s.x, s.y));
        let emb = net.embed_on_tape(&tape, &pts, JetLayout::Value);
        let fields = fields_on(net, &vars, emb, JetLayout::Value, n);
        let samples: Vec<FieldSample> = input.data.iter().map(|(s, _)| *s).collect();
        let d = lt::data_terms(&tape, &fields, &samples, ctx.log_eps, 1.0 / ctx.n_data as f64);
        for (i, v) in d.iter().enumerate() {
            terms.0[i] = v.scalar();
        }
        parts.extend(d);
    }

    if let Some(w) = ctx.weights {
        if !input.boundary.is_empty() {
            let n = input.boundary.len();
            let pts = coords(input.boundary, |s| (s.x, s.y));
            let emb = net.embed_on_tape(&tape, &pts, JetLayout::Gradient);
            let u = net.tape_field(Field::U, &vars, emb, JetLayout::Gradient, n);
            let vals = emb.rows(0, n);
            let v = net.tape_field(Field::V, &vars, vals, JetLayout::Value, n).out;
            let p = net.tape_field(Field::P, &vars, vals, JetLayout::Value, n).out;
            let samples: Vec<FieldSample> = input.boundary.iter().map(|(s, _)| *s).collect();
            let bc = lt::bc_term(&tape, &u, v, p, &samples, ctx.tag_counts)?;
            terms.0[5] = bc.scalar();
            parts.push(bc);
        }
        if !input.colloc.is_empty() {
            let n = input.colloc.len();
            let pts: Vec<[f64; 3]> = input
                .colloc
                .iter()
                .zip(input.re_colloc)
                .map(|((c, _), re)| [c.x, c.y, *re])
                .collect();
            let emb = net.embed_on_tape(&tape, &pts, JetLayout::Laplacian);
            let lap = |f: Field| net.tape_field(f, &vars, emb, JetLayout::Laplacian, n);
            let (u, v, k, e) = (lap(Field::U), lap(Field::V), lap(Field::K), lap(Field::Eps));
            let p = net.tape_field(Field::P, &vars, emb.rows(0, 3 * n), JetLayout::Gradient, n);
            let jets = lt::flow_jets(&u, &v, &p, &k, &e);
            let mu: Vec<f64> = input.colloc.iter().map(|(_, pr)| pr.mu).collect();
            let props = FluidProps {
                rho: input.colloc[0].1.rho,
                mu: tape.column(&mu),
            };
            let r = physics::residuals(&jets, &props, ctx.consts);
            let forcing: Vec<_> = input.colloc.iter().map(|(c, _)| c.forcing).collect();
            let pde = lt::pde_terms(&tape, &r, &forcing, ctx.log_eps, 1.0 / ctx.n_colloc as f64);
            let lam = w.as_array();
            for i in 0..4 {
                terms.0[6 + i] = pde[i].scalar();
                parts.push(pde[i] * lam[i]);
            }
        }
    }

    let mut iter = parts.into_iter();
    let Some(first) = iter.next() else {
        return Ok((terms, vec![0.0; net.param_count()]));
    };
    let root = iter.fold(first, |acc, p| acc + p);
    if !root.scalar().is_finite() {
        return Ok((terms, vec![f64::NAN; net.param_count()]));
    }
    match reverse_grad(&tape, root, net.param_count()) {
        Ok(g) => Ok((terms, g.0)),
        Err(AutodiffError::NonFiniteAdjoint { .. }) => Ok((terms, vec![f64::NAN; net.param_count()])),
        Err(e) => Err(e.into()),
    }
}

fn shard_ranges(len: usize, shards: usize) -> Vec<std::ops::Range<usize>> {
    let size = len.div_ceil(shards.max(1)).max(1);
    (0..shards)
        .map(|s| (s * size).min(len)..((s + 1) * size).min(len))
        .collect()
}

/// Loss breakdown and parameter gradient of one batch.
pub fn evaluate_batch(
    net: &FieldNetworkSet,
    batch: &Batch,
    weights: Option<LossWeights>,
    ablation: Ablation,
    consts: &TurbConstants,
    shards: usize,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
    let mut tag_counts = [0usize; 4];
    for (s, _) in &batch.boundary {
        if s.tag == BoundaryTag::Interior {
            return Err(LossError::UnknownTag(s.tag).into());
        }
        tag_counts[loss::tag_slot(s.tag)] += 1;
    }
    let weights = if ablation.uses_physics() { weights } else { None };
    let ctx = EvalContext {
        net,
        n_data: batch.data.len().max(1),
        n_colloc: batch.collocation.len().max(1),
        tag_counts,
        weights,
        log_eps: ablation.log_eps(),
        consts,
    };
    let (rd, rc, rb) = (
        shard_ranges(batch.data.len(), shards),
        shard_ranges(batch.collocation.len(), shards),
        shard_ranges(batch.boundary.len(), shards),
    );
    let inputs: Vec<ShardInput<'_>> = (0..shards)
        .map(|s| ShardInput {
            data: &batch.data[rd[s].clone()],
            colloc: &batch.collocation[rc[s].clone()],
            re_colloc: &batch.re_colloc[rc[s].clone()],
            boundary: &batch.boundary[rb[s].clone()],
        })
        .collect();
    let results: Vec<Result<(Terms, Vec<f64>), TrainError>> = match pool {
        Some(pool) if shards > 1 => pool.install(|| inputs.par_iter().map(|i| eval_shard(&ctx, i)).collect()),
        _ => inputs.iter().map(|i| eval_shard(&ctx, i)).collect(),
    };
    let mut terms = [0.0; 10];
    let mut grad = vec![0.0; net.param_count()];
    for r in results {
        let (t, g) = r?;
        for (a, b) in terms.iter_mut().zip(t.0) {
            *a += b;
        }
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let data = DataLoss {
        u: terms[0],
        v: terms[1],
        p: terms[2],
        k: terms[3],
        eps: terms[4],
    };
    let pde = PdeLoss::from_array([terms[6], terms[7], terms[8], terms[9]]);
    let breakdown = match weights {
        Some(w) => LossBreakdown::compose(&data, terms[5], &pde, &w),
        None => LossBreakdown::compose(&data, 0.0, &PdeLoss::default(), &LossWeights::from_array([0.0; 4])),
    };
    Ok((breakdown, grad))
}

/// Pointwise residuals minus forcing at every collocation point of every
/// case, evaluated through forward jets.
pub fn collocation_residuals(
    net: &FieldNetworkSet,
    cases: &[CaseDataset],
    consts: &TurbConstants,
) -> Vec<ResidualBundle<f64>> {
    let pts: Vec<(CollocationPoint, f64, FluidProps)> = cases
        .iter()
        .flat_map(|c| c.collocation_points.iter().map(move |p| (*p, c.re, c.props)))
        .collect();
    pts.par_iter()
        .map(|(c, re, props)| {
            let j = net.forward_jets(&[c.x, c.y, *re]).expect("three coordinates");
            let r = physics::residuals(&FlowJets::from_field_jets(&j), props, consts);
            ResidualBundle {
                cont: r.cont - c.forcing.cont,
                mom_x: r.mom_x - c.forcing.mom_x,
                mom_y: r.mom_y - c.forcing.mom_y,
                k: r.k - c.forcing.k,
                eps: r.eps - c.forcing.eps,
            }
        })
        .collect()
}

/// Unweighted PDE means over all collocation points, the calibration input
/// of [`loss::normalize_lambdas`].
pub fn calibration_means(
    net: &FieldNetworkSet,
    cases: &[CaseDataset],
    consts: &TurbConstants,
    log_eps: bool,
) -> Result<PdeLoss, TrainError> {
    Ok(loss::pde_components(
        &collocation_residuals(net, cases, consts),
        log_eps,
    )?)
}

/// Input ranges covering every case's domain and Reynolds number, for
/// [`crate::network::NetworkConfig::bounds`].
pub fn input_bounds(cases: &[CaseDataset]) -> InputBounds {
    let fold = |f: &dyn Fn(&CaseDataset) -> (f64, f64)| {
        let (lo, hi) = cases
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (l, h)| {
                (a.min(l), b.max(h))
            });
        if lo.is_finite() {
            AxisRange::new(lo, hi)
        } else {
            AxisRange::unit()
        }
    };
    InputBounds {
        x: fold(&|c| (c.domain.xmin, c.domain.xmax)),
        y: fold(&|c| (c.domain.ymin, c.domain.ymax)),
        re: fold(&|c| (c.re, c.re)),
    }
}

/// Resumable training state over a fixed set of cases.
pub struct Trainer<'d> {
    cases: &'d [CaseDataset],
    config: TrainConfig,
    net: FieldNetworkSet,
    params: Vec<f64>,
    adam: AdamState,
    phase: Phase,
    step: usize,
    lambdas: Option<LossWeights>,
    lambda_history: Vec<(usize, LossWeights)>,
    recent: VecDeque<f64>,
    curve: Vec<CurveRow>,
    last_loss: Option<LossBreakdown>,
    stop: Option<StopReason>,
    steps_done: [usize; 2],
    pool: rayon::ThreadPool,
}

fn check_cases(cases: &[CaseDataset], mode: InputMode, physics: bool) -> Result<(), TrainError> {
    let first = cases.first().ok_or(TrainError::NoCases)?;
    if mode == InputMode::FixedRe && cases.len() != 1 {
        return Err(TrainError::ModeMismatch {
            mode,
            cases: cases.len(),
        });
    }
    for c in cases {
        if c.data_points.is_empty() {
            return Err(TrainError::EmptyData(c.name.clone()));
        }
        if physics && c.collocation_points.is_empty() {
            return Err(TrainError::EmptyCollocation(c.name.clone()));
        }
        if c.scales != first.scales {
            return Err(TrainError::ScaleMismatch(first.name.clone(), c.name.clone()));
        }
    }
    Ok(())
}

impl<'d> Trainer<'d> {
    pub fn new(net: FieldNetworkSet, cases: &'d [CaseDataset], config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        check_cases(cases, net.mode(), config.ablation.uses_physics())?;
        let params = net.params();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(Self {
            cases,
            adam: AdamState::new(params.len()),
            params,
            net,
            config,
            phase: Phase::Pretrain,
            step: 0,
            lambdas: None,
            lambda_history: Vec::new(),
            recent: VecDeque::new(),
            curve: Vec::new(),
            last_loss: None,
            stop: None,
            steps_done: [0, 0],
            pool,
        })
    }

    /// Continues a run from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ck: &Checkpoint, cases: &'d [CaseDataset], config: TrainConfig) -> Result<Self, TrainError> {
        let net = ck.network()?;
        let opt = ck
            .optimizer
            .as_ref()
            .ok_or_else(|| TrainError::Checkpoint("no optimizer state".into()))?;
        let phase =
            Phase::parse(&opt.phase).ok_or_else(|| TrainError::Checkpoint(format!("unknown phase `{}`", opt.phase)))?;
        let mut t = Self::new(net, cases, config)?;
        if opt.m.len() != t.params.len() || opt.v.len() != t.params.len() {
            return Err(TrainError::Checkpoint(
                "optimizer moments do not match parameters".into(),
            ));
        }
        t.adam.m = opt.m.clone();
        t.adam.v = opt.v.clone();
        t.adam.t = opt.adam_t;
        t.phase = phase;
        t.step = opt.step as usize;
        t.lambdas = opt.lambdas.map(LossWeights::from_array);
        t.recent = opt.recent_totals.iter().copied().collect();
        t.steps_done = match phase {
            Phase::Pretrain => [t.step, 0],
            _ => [t.config.pretrain_steps, t.step],
        };
        if let Some(w) = t.lambdas {
            t.lambda_history.push((t.step, w));
        }
        Ok(t)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Steps completed in the current phase.
    pub fn step_in_phase(&self) -> usize {
        self.step
    }

    pub fn lambdas(&self) -> Option<LossWeights> {
        self.lambdas
    }

    pub fn network(&self) -> &FieldNetworkSet {
        &self.net
    }

    pub fn into_network(self) -> FieldNetworkSet {
        self.net
    }

    pub fn curve(&self) -> &[CurveRow] {
        &self.curve
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::of(&self.net);
        ck.optimizer = Some(OptimizerSnapshot {
            phase: self.phase.name().to_string(),
            step: self.step as u64,
            adam_t: self.adam.t,
            lambdas: self.lambdas.map(|w| w.as_array()),
            recent_totals: self.recent.iter().copied().collect(),
            m: self.adam.m.clone(),
            v: self.adam.v.clone(),
        });
        ck
    }

    fn physics_now(&self) -> bool {
        self.phase == Phase::Main && self.config.ablation.uses_physics()
    }

    fn calibrate(&mut self) -> Result<(), TrainError> {
        let log_eps = self.config.ablation.log_eps();
        let means = self
            .pool
            .install(|| calibration_means(&self.net, self.cases, &self.config.constants, log_eps))?;
        let w = loss::normalize_lambdas(means.as_array());
        self.lambdas = Some(w);
        self.lambda_history.push((self.step, w));
        Ok(())
    }

    fn enter_main(&mut self) -> Result<(), TrainError> {
        self.phase = Phase::Main;
        self.step = 0;
        self.adam = AdamState::new(self.params.len());
        self.recent.clear();
        if self.config.ablation.uses_physics() {
            self.calibrate()?;
        }
        Ok(())
    }

    /// Advances phase bookkeeping; returns false once training is over.
    fn settle(&mut self) -> Result<bool, TrainError> {
        loop {
            match self.phase {
                Phase::Pretrain if self.step >= self.config.pretrain_steps => self.enter_main()?,
                Phase::Main if self.step >= self.config.main_steps => {
                    self.phase = Phase::Done;
                    self.stop.get_or_insert(StopReason::StepsExhausted);
                }
                Phase::Done => return Ok(false),
                _ => return Ok(true),
            }
        }
    }

    /// Runs one optimization step. Returns false when training is over.
    pub fn step(&mut self) -> Result<bool, TrainError> {
        if !self.settle()? {
            return Ok(false);
        }
        let (phase, step) = (self.phase, self.step);
        if phase == Phase::Main {
            if let (Some(n), true) = (self.config.renormalize_every, self.config.ablation.uses_physics()) {
                if step > 0 && step % n == 0 {
                    self.calibrate()?;
                }
            }
        }
        let physics = self.physics_now();
        let lr = lr_schedule(step, &self.config);
        let batch = sample_batch(self.cases, &self.config, phase, step, physics);
        let weights = if physics { self.lambdas } else { None };
        let (breakdown, grad) = evaluate_batch(
            &self.net,
            &batch,
            weights,
            self.config.ablation,
            &self.config.constants,
            self.config.shards,
            Some(&self.pool),
        )?;
        if !breakdown.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            self.stop = Some(StopReason::NonFinite { phase, step });
            return Err(TrainError::NonFinite { phase, step });
        }
        if step % self.config.log_every == 0 {
            self.curve.push(CurveRow {
                phase,
                step,
                lr,
                lambdas: weights.map(|w| w.as_array()).unwrap_or([0.0; 4]),
                loss: breakdown,
            });
        }
        self.last_loss = Some(breakdown);
        adam_step(&mut self.params, &grad, &mut self.adam, lr)?;
        self.net.set_params(&self.params)?;
        self.step += 1;
        self.steps_done[(phase == Phase::Main) as usize] += 1;
        if phase == Phase::Main {
            self.track_convergence(breakdown.total);
        }
        Ok(true)
    }

    fn track_convergence(&mut self, total: f64) {
        let Some(c) = self.config.convergence else { return };
        self.recent.push_back(total);
        while self.recent.len() > 2 * c.window {
            self.recent.pop_front();
        }
        if self.recent.len() == 2 * c.window {
            let old: f64 = self.recent.iter().take(c.window).sum::<f64>() / c.window as f64;
            let new: f64 = self.recent.iter().skip(c.window).sum::<f64>() / c.window as f64;
            if ((new - old) / old).abs() < c.tolerance {
                self.phase = Phase::Done;
                self.stop = Some(StopReason::Converged { step: self.step });
            }
        }
    }

    /// Runs to completion. On a non-finite loss the parameters are rolled
    /// back to the last state whose loss was finite, and the error is
    /// returned; [`Trainer::report`] still describes the partial run.
    pub fn run(&mut self) -> Result<TrainReport, TrainError> {
        let started = Instant::now();
        let mut last_good = self.params.clone();
        loop {
            let before = self.params.clone();
            match self.step() {
                Ok(true) => last_good = before,
                Ok(false) => break,
                Err(e) => {
                    if matches!(e, TrainError::NonFinite { .. }) {
                        self.params = last_good;
                        self.net.set_params(&self.params)?;
                    }
                    return Err(e);
                }
            }
        }
        let mut report = self.report();
        report.wall_clock_s = started.elapsed().as_secs_f64();
        report.validation = self.validate()?;
        Ok(report)
    }

    /// Validation metrics for every case with validation points.
    pub fn validate(&self) -> Result<Vec<MetricsEntry>, TrainError> {
        let mut out = Vec::new();
        for c in self.cases.iter().filter(|c| !c.validation_points.is_empty()) {
            out.push(MetricsEntry {
                case: c.name.clone(),
                re: c.re,
                metrics: validation_errors(&self.net, &c.validation_points, c.re)?,
            });
        }
        Ok(out)
    }

    pub fn report(&self) -> TrainReport {
        TrainReport {
            pretrain_steps: self.steps_done[0],
            main_steps: self.steps_done[1],
            stop: self.stop.unwrap_or(StopReason::StepsExhausted),
            lambda_history: self.lambda_history.clone(),
            wall_clock_s: 0.0,
            final_loss: self.last_loss,
            validation: Vec::new(),
            checkpoint_path: None,
            curve: self.curve.clone(),
        }
    }
}

/// Data-only pre-training of every network on its own variable.
pub fn pretrain(
    net: FieldNetworkSet,
    dataset: &CaseDataset,
    config: &TrainConfig,
) -> Result<FieldNetworkSet, TrainError> {
    let cfg = TrainConfig {
        main_steps: 0,
        ..config.clone()
    };
    let cases = std::slice::from_ref(dataset);
    let mut t = Trainer::new(net, cases, cfg)?;
    while t.phase() == Phase::Pretrain && t.step_in_phase() < config.pretrain_steps {
        t.step()?;
    }
    Ok(t.into_network())
}

/// Full training of an already pre-trained network.
pub fn train_full(
    net: FieldNetworkSet,
    dataset: &CaseDataset,
    config: &TrainConfig,
) -> Result<(FieldNetworkSet, TrainReport), TrainError> {
    let cfg = TrainConfig {
        pretrain_steps: 0,
        ..config.clone()
    };
    train(net, std::slice::from_ref(dataset), &cfg)
}

/// Both phases over one case (fixed Re) or several (parametric).
pub fn train(
    net: FieldNetworkSet,
    cases: &[CaseDataset],
    config: &TrainConfig,
) -> Result<(FieldNetworkSet, TrainReport), TrainError> {
    let mut t = Trainer::new(net, cases, config.clone())?;
    let report = t.run()?;
    Ok((t.into_network(), report))
}

/// Both phases over several Reynolds-number cases with Re as a network input.
pub fn train_parametric(
    net: FieldNetworkSet,
    cases: &[CaseDataset],
    config: &TrainConfig,
) -> Result<(FieldNetworkSet, TrainReport), TrainError> {
    if net.mode() != InputMode::ParametricRe {
        return Err(TrainError::ModeMismatch {
            mode: net.mode(),
            cases: cases.len(),
        });
    }
    if cases.len() < 2 {
        return Err(TrainError::TooFewCases(cases.len()));
    }
    train(net, cases, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_mms_case, MmsFamily, MmsOptions, SplitConfig};
    use crate::network::{AxisRange, InputBounds, NetworkConfig};

    fn tiny_net(mode: InputMode) -> FieldNetworkSet {
        let cfg = NetworkConfig {
            hidden: vec![8, 8],
            n_freq: 2,
            mode,
            bounds: InputBounds {
                re: AxisRange::new(2800.0, 5600.0),
                ..Default::default()
            },
            ..Default::default()
        };
        FieldNetworkSet::init(cfg, 11).unwrap()
    }

    fn case(s: f64) -> CaseDataset {
        let opts = MmsOptions {
            n_cloud: 600,
            n_per_boundary: 10,
            split: SplitConfig {
                n_data: 200,
                n_collocation: 200,
                seed: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        make_mms_case(MmsFamily::TrigVortex, s, &opts).unwrap().1
    }

    fn quick(pre: usize, main: usize) -> TrainConfig {
        TrainConfig {
            pretrain_steps: pre,
            main_steps: main,
            batch: BatchSizes {
                data: 32,
                collocation: 32,
                boundary: 16,
            },
            convergence: None,
            ..Default::default()
        }
    }

    #[test]
    fn lr_schedule_values() {
        let c = TrainConfig::default();
        assert_eq!(lr_schedule(0, &c), 0.001);
        assert_eq!(lr_schedule(999, &c), 0.001);
        assert_eq!(lr_schedule(1000, &c), 0.00095);
        // nearest double to the exact rational 0.001·0.95¹⁰
        assert_eq!(lr_schedule(10000, &c), 5.987369392383789e-4);
    }

    #[test]
    fn adam_closed_forms() {
        let mut p = [1.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[0.0], &mut s, 1e-3).unwrap();
        assert_eq!(p[0], 1.0);
        let mut p = [0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 1e-3).unwrap();
        assert!((p[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = [0.5, 0.5];
        let mut s = AdamState::new(2);
        assert!(matches!(
            adam_step(&mut p, &[1.0, f64::NAN], &mut s, 1e-3),
            Err(TrainError::NonFiniteGradient)
        ));
        assert_eq!(s.t, 0);
        assert_eq!(p, [0.5, 0.5]);
        assert!(adam_step(&mut p, &[1.0], &mut s, 1e-3).is_err());
    }

    #[test]
    fn adam_quadratic_bowl() {
        // Independent scalar simulation of the same recurrence for f = θ²/2
        // at lr = 0.01 ends at |θ| ≈ 1.6e-4 after 500 steps.
        let mut p = [1.0];
        let mut s = AdamState::new(1);
        for _ in 0..500 {
            let g = [p[0]];
            adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        }
        assert!(p[0].abs() < 1e-2, "{}", p[0]);
    }

    #[test]
    fn zero_pretrain_steps_is_noop() {
        let net = tiny_net(InputMode::FixedRe);
        let c = case(5600.0);
        let after = pretrain(net.clone(), &c, &quick(0, 0)).unwrap();
        assert_eq!(after.params(), net.params());
    }

    #[test]
    fn pretrain_gradient_touches_only_data() {
        let net = tiny_net(InputMode::FixedRe);
        let cases = [case(5600.0)];
        let cfg = quick(1, 0);
        let b = sample_batch(&cases, &cfg, Phase::Pretrain, 0, false);
        assert!(b.collocation.is_empty() && b.boundary.is_empty());
        let (l, _) = evaluate_batch(&net, &b, None, Ablation::None, &cfg.constants, 1, None).unwrap();
        assert_eq!([l.l_bc, l.l_mom, l.l_cont, l.l_k, l.l_eps], [0.0; 5]);
        assert_eq!(l.total, l.data_sum());
    }

    #[test]
    fn u_loss_gradient_isolated_to_u_network() {
        let net = tiny_net(InputMode::FixedRe);
        let c = case(5600.0);
        let tape = Tape::new();
        let vars = net.register(&tape);
        let pts: Vec<[f64; 3]> = c.data_points.iter().map(|s| [s.x, s.y, c.re]).collect();
        let emb = net.embed_on_tape(&tape, &pts, JetLayout::Value);
        let fields = fields_on(&net, &vars, emb, JetLayout::Value, pts.len());
        let d = lt::data_terms(&tape, &fields, &c.data_points, true, 1.0 / pts.len() as f64);
        let g = reverse_grad(&tape, d[0], net.param_count()).unwrap();
        let u = net.param_range(Field::U);
        assert!(g.0[u.clone()].iter().any(|x| *x != 0.0));
        for (i, x) in g.0.iter().enumerate() {
            if !u.contains(&i) {
                assert_eq!(*x, 0.0);
            }
        }
    }

    #[test]
    fn tape_losses_match_reference() {
        let net = tiny_net(InputMode::FixedRe);
        let cases = [case(4000.0)];
        let cfg = quick(0, 1);
        let batch = sample_batch(&cases, &cfg, Phase::Main, 3, true);
        let w = LossWeights::from_array([0.3, 1.0, 0.02, 0.5]);
        for ablation in [Ablation::None, Ablation::NoLogEps] {
            let (l, _) = evaluate_batch(&net, &batch, Some(w), ablation, &cfg.constants, 1, None).unwrap();
            let pts: Vec<[f64; 3]> = batch.data.iter().map(|(s, re)| [s.x, s.y, *re]).collect();
            let samples: Vec<FieldSample> = batch.data.iter().map(|(s, _)| *s).collect();
            let d = loss::data_loss(&net.predict_batch(&pts), &samples, ablation.log_eps()).unwrap();
            let bpred: Vec<loss::BoundaryPrediction> = batch
                .boundary
                .iter()
                .map(|(s, re)| {
                    let j = net.forward_jets(&[s.x, s.y, *re]).unwrap();
                    loss::BoundaryPrediction {
                        u: j.u.value(),
                        v: j.v.value(),
                        p: j.p.value(),
                        du_dy: j.u.grad(1),
                    }
                })
                .collect();
            let bsamples: Vec<FieldSample> = batch.boundary.iter().map(|(s, _)| *s).collect();
            let bc = loss::bc_loss(&bpred, &bsamples).unwrap().total();
            let sub = CaseDataset {
                collocation_points: batch.collocation.iter().map(|(c, _)| *c).collect(),
                ..cases[0].clone()
            };
            let pde = calibration_means(&net, &[sub], &cfg.constants, ablation.log_eps()).unwrap();
            let reference = LossBreakdown::compose(&d, bc, &pde, &w);
            for (a, b) in l.values().iter().zip(reference.values()) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-12), "{ablation:?}: {a} vs {b}");
            }
            assert!((l.total - l.component_sum()).abs() <= 1e-12 * l.total);
        }
    }

    #[test]
    fn shards_and_workers_do_not_change_results() {
        let net = tiny_net(InputMode::FixedRe);
        let cases = [case(5600.0)];
        let cfg = quick(0, 1);
        let batch = sample_batch(&cases, &cfg, Phase::Main, 0, true);
        let w = Some(LossWeights::default());
        let (l1, g1) = evaluate_batch(&net, &batch, w, Ablation::None, &cfg.constants, 4, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let (l2, g2) = evaluate_batch(&net, &batch, w, Ablation::None, &cfg.constants, 4, Some(&pool)).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
        let (l3, g3) = evaluate_batch(&net, &batch, w, Ablation::None, &cfg.constants, 1, None).unwrap();
        assert!((l1.total - l3.total).abs() < 1e-12 * l3.total);
        for (a, b) in g1.iter().zip(&g3) {
            assert!((a - b).abs() < 1e-10 * b.abs().max(1e-8));
        }
    }

    #[test]
    fn lambdas_frozen_after_entry() {
        let cases = [case(5600.0)];
        let (_, report) = train(tiny_net(InputMode::FixedRe), &cases, &quick(3, 6)).unwrap();
        assert_eq!(report.lambda_history.len(), 1);
        let main: Vec<_> = report.curve.iter().filter(|r| r.phase == Phase::Main).collect();
        assert_eq!(main.len(), 6);
        assert!(main.iter().all(|r| r.lambdas == main[0].lambdas));
        assert_eq!(report.curve.len(), 9);
        let pre = &report.curve[0];
        assert_eq!(pre.lambdas, [0.0; 4]);
        assert_eq!(pre.loss.total, pre.loss.data_sum());
    }

    #[test]
    fn periodic_renormalization() {
        let cases = [case(5600.0)];
        let cfg = TrainConfig {
            renormalize_every: Some(2),
            ..quick(0, 5)
        };
        let (_, report) = train(tiny_net(InputMode::FixedRe), &cases, &cfg).unwrap();
        let steps: Vec<usize> = report.lambda_history.iter().map(|(s, _)| *s).collect();
        assert_eq!(steps, [0, 2, 4]);
    }

    #[test]
    fn deterministic_runs() {
        let cases = [case(5600.0)];
        let a = train(tiny_net(InputMode::FixedRe), &cases, &quick(4, 4)).unwrap();
        let b = train(tiny_net(InputMode::FixedRe), &cases, &quick(4, 4)).unwrap();
        assert_eq!(curve_csv(&a.1.curve), curve_csv(&b.1.curve));
        assert_eq!(a.0.params(), b.0.params());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let cases = [case(5600.0)];
        let cfg = TrainConfig {
            convergence: Some(Convergence {
                window: 2,
                tolerance: 1e-12,
            }),
            ..quick(3, 6)
        };
        for split in [2, 3, 5] {
            let mut full = Trainer::new(tiny_net(InputMode::FixedRe), &cases, cfg.clone()).unwrap();
            for _ in 0..=split {
                full.step().unwrap();
            }
            let mut first = Trainer::new(tiny_net(InputMode::FixedRe), &cases, cfg.clone()).unwrap();
            for _ in 0..split {
                first.step().unwrap();
            }
            let bytes = first.checkpoint().to_bytes();
            let ck = Checkpoint::from_bytes(&bytes).unwrap();
            let mut resumed = Trainer::resume(&ck, &cases, cfg.clone()).unwrap();
            resumed.step().unwrap();
            let bits = |t: &Trainer<'_>| t.network().params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&resumed), bits(&full), "split {split}");
            assert_eq!(resumed.curve().last(), full.curve().last());
        }
    }

    #[test]
    fn non_finite_loss_restores_last_good() {
        let mut c = case(5600.0);
        c.collocation_points[0].forcing.mom_x = f64::NAN;
        let cfg = TrainConfig {
            batch: BatchSizes {
                collocation: 1000,
                ..quick(0, 0).batch
            },
            ..quick(2, 3)
        };
        let cases = [c];
        let mut t = Trainer::new(tiny_net(InputMode::FixedRe), &cases, cfg).unwrap();
        let err = t.run().unwrap_err();
        assert!(
            matches!(
                err,
                TrainError::NonFinite {
                    phase: Phase::Main,
                    step: 0
                }
            ),
            "{err}"
        );
        assert!(t.network().params().iter().all(|p| p.is_finite()));
        assert_eq!(
            t.report().stop,
            StopReason::NonFinite {
                phase: Phase::Main,
                step: 0
            }
        );
        assert_eq!(t.curve().len(), 2);
    }

    #[test]
    fn convergence_stops_early() {
        let cases = [case(5600.0)];
        let cfg = TrainConfig {
            convergence: Some(Convergence {
                window: 2,
                tolerance: 10.0,
            }),
            ..quick(0, 50)
        };
        let (_, r) = train(tiny_net(InputMode::FixedRe), &cases, &cfg).unwrap();
        assert_eq!(r.stop, StopReason::Converged { step: 4 });
        assert_eq!(r.main_steps, 4);
    }

    #[test]
    fn data_only_never_uses_physics() {
        let cases = [case(5600.0)];
        let cfg = TrainConfig {
            ablation: Ablation::DataOnly,
            ..quick(2, 3)
        };
        let (_, r) = train(tiny_net(InputMode::FixedRe), &cases, &cfg).unwrap();
        assert!(r.lambda_history.is_empty());
        assert!(r
            .curve
            .iter()
            .all(|row| row.loss.l_bc == 0.0 && row.loss.raw_mom == 0.0));
        assert_eq!(r.curve.len(), 5);
    }

    #[test]
    fn parametric_batches_mix_cases_uniformly() {
        let cases: Vec<CaseDataset> = [2800.0, 3360.0, 3920.0, 4480.0, 5040.0, 5600.0]
            .iter()
            .map(|&s| case(s))
            .collect();
        let cfg = TrainConfig {
            batch: BatchSizes {
                data: 6000,
                collocation: 6000,
                boundary: 0,
            },
            ..quick(0, 1)
        };
        let b = sample_batch(&cases, &cfg, Phase::Main, 0, true);
        for c in &cases {
            let share = b.data.iter().filter(|(_, re)| *re == c.re).count() as f64 / 6000.0;
            assert!((share - 1.0 / 6.0).abs() < 0.02, "{share}");
            let share = b.re_colloc.iter().filter(|re| **re == c.re).count() as f64 / 6000.0;
            assert!((share - 1.0 / 6.0).abs() < 0.02, "{share}");
        }
    }

    #[test]
    fn parametric_preconditions() {
        let cases = [case(2800.0), case(5600.0)];
        let fixed = tiny_net(InputMode::FixedRe);
        assert!(matches!(
            train_parametric(fixed.clone(), &cases, &quick(0, 0)),
            Err(TrainError::ModeMismatch { .. })
        ));
        assert!(matches!(
            train(fixed, &cases, &quick(0, 0)),
            Err(TrainError::ModeMismatch { .. })
        ));
        let para = tiny_net(InputMode::ParametricRe);
        assert!(matches!(
            train_parametric(para.clone(), &cases[..1], &quick(0, 0)),
            Err(TrainError::TooFewCases(1))
        ));
        let mut other = cases.clone();
        other[1].scales.length = 2.0;
        assert!(matches!(
            train_parametric(para.clone(), &other, &quick(0, 0)),
            Err(TrainError::ScaleMismatch(..))
        ));
        let (_, r) = train_parametric(para, &cases, &quick(2, 2)).unwrap();
        assert_eq!(r.validation.len(), 2);
    }

    #[test]
    fn bounds_cover_cases() {
        let b = input_bounds(&[case(2800.0), case(5600.0)]);
        assert_eq!(b.re, AxisRange::new(2800.0, 5600.0));
        assert_eq!(b.x, AxisRange::unit());
        assert_eq!(input_bounds(&[]), InputBounds::default());
    }

    #[test]
    fn config_validation() {
        for bad in [
            TrainConfig {
                lr0: 0.0,
                ..Default::default()
            },
            TrainConfig {
                decay: 1.5,
                ..Default::default()
            },
            TrainConfig {
                decay_interval: 0,
                ..Default::default()
            },
            TrainConfig {
                shards: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn curve_csv_layout() {
        let cases = [case(5600.0)];
        let (_, r) = train(tiny_net(InputMode::FixedRe), &cases, &quick(1, 1)).unwrap();
        let text = curve_csv(&r.curve);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let n = lines[0].split(',').count();
        assert_eq!(n, 22);
        assert!(lines.iter().all(|l| l.split(',').count() == n));
        assert!(lines[1].starts_with("pretrain,0,1e-3,"));
    }
}

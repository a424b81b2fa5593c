//! Differentiable loss terms recorded on a [`Tape`].
//!
//! Every term is a sum over the batch scaled by a caller-supplied factor, so
//! a batch split into shards can be reduced to the same mean.

use crate::autodiff::{comp, Tape, Var};
use crate::data::{BoundaryTag, FieldSample, Forcing};
use crate::network::StackedField;
use crate::physics::{FlowJets, GradParts, JetParts, ResidualBundle};

use super::{tag_slot, LossError};

fn column_of<'t>(tape: &'t Tape, samples: &[FieldSample], f: impl Fn(&FieldSample) -> f64) -> Var<'t> {
    let v: Vec<f64> = samples.iter().map(f).collect();
    tape.column(&v)
}

/// Per-variable data terms `scale · Σ (pred − target)²` in the order
/// u, v, p, k, ε. `fields` must be value-layout outputs of the five networks
/// over `samples`.
pub fn data_terms<'t>(
    tape: &'t Tape,
    fields: &[StackedField<'t>; 5],
    samples: &[FieldSample],
    log_eps: bool,
    scale: f64,
) -> [Var<'t>; 5] {
    let sq = |pred: Var<'t>, target: Var<'t>| (pred - target).square().sum() * scale;
    let eps_term = if log_eps {
        sq(
            fields[4].raw_comp(comp::VALUE),
            column_of(tape, samples, |s| s.eps.ln()),
        )
    } else {
        sq(fields[4].comp(comp::VALUE), column_of(tape, samples, |s| s.eps))
    };
    [
        sq(fields[0].comp(comp::VALUE), column_of(tape, samples, |s| s.u)),
        sq(fields[1].comp(comp::VALUE), column_of(tape, samples, |s| s.v)),
        sq(fields[2].comp(comp::VALUE), column_of(tape, samples, |s| s.p)),
        sq(fields[3].comp(comp::VALUE), column_of(tape, samples, |s| s.k)),
        eps_term,
    ]
}

/// Boundary term: each point's violation weighted by `1 / tag_counts[tag]`,
/// so the result is the sum of the per-tag means. `u` needs at least the
/// gradient layout; `v` and `p` are value columns.
pub fn bc_term<'t>(
    tape: &'t Tape,
    u: &StackedField<'t>,
    v: Var<'t>,
    p: Var<'t>,
    samples: &[FieldSample],
    tag_counts: [usize; 4],
) -> Result<Var<'t>, LossError> {
    let n = samples.len();
    let (mut w_uv, mut w_p, mut w_sym) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for (i, s) in samples.iter().enumerate() {
        let w = 1.0 / tag_counts[tag_slot(s.tag)].max(1) as f64;
        match s.tag {
            BoundaryTag::Inlet | BoundaryTag::Wall => w_uv[i] = w,
            BoundaryTag::Outlet => w_p[i] = w,
            BoundaryTag::Symmetry => w_sym[i] = w,
            BoundaryTag::Interior => return Err(LossError::UnknownTag(s.tag)),
        }
    }
    let du = u.comp(comp::VALUE) - column_of(tape, samples, |s| s.u);
    let dv2 = (v - column_of(tape, samples, |s| s.v)).square();
    let dp2 = (p - column_of(tape, samples, |s| s.p)).square();
    let uy2 = u.comp(comp::DY).square();
    let total = tape.column(&w_uv) * (du.square() + dv2) + tape.column(&w_p) * dp2 + tape.column(&w_sym) * (dv2 + uy2);
    Ok(total.sum())
}

/// Assembles residual inputs from stacked outputs. `p` may use the gradient
/// layout; the others need the Laplacian layout.
pub fn flow_jets<'t>(
    u: &StackedField<'t>,
    v: &StackedField<'t>,
    p: &StackedField<'t>,
    k: &StackedField<'t>,
    eps: &StackedField<'t>,
) -> FlowJets<Var<'t>> {
    let parts = |f: &StackedField<'t>| JetParts {
        val: f.comp(comp::VALUE),
        dx: f.comp(comp::DX),
        dy: f.comp(comp::DY),
        dxx: f.comp(comp::DXX),
        dyy: f.comp(comp::DYY),
    };
    FlowJets {
        u: parts(u),
        v: parts(v),
        p: GradParts {
            val: p.comp(comp::VALUE),
            dx: p.comp(comp::DX),
            dy: p.comp(comp::DY),
        },
        k: parts(k),
        eps: parts(eps),
    }
}

/// Unweighted PDE terms (momentum, continuity, k, ε), each
/// `scale · Σ` of the pointwise loss of `residual − forcing`.
pub fn pde_terms<'t>(
    tape: &'t Tape,
    r: &ResidualBundle<Var<'t>>,
    forcing: &[Forcing],
    log_eps: bool,
    scale: f64,
) -> [Var<'t>; 4] {
    let shifted = |res: Var<'t>, f: fn(&Forcing) -> f64| {
        if forcing.iter().all(|x| f(x) == 0.0) {
            res
        } else {
            let col: Vec<f64> = forcing.iter().map(f).collect();
            res - tape.column(&col)
        }
    };
    let mx = shifted(r.mom_x, |f| f.mom_x);
    let my = shifted(r.mom_y, |f| f.mom_y);
    let c = shifted(r.cont, |f| f.cont);
    let k = shifted(r.k, |f| f.k);
    let e = shifted(r.eps, |f| f.eps);
    let eps_loss = if log_eps { e.square().ln_1p() } else { e.square() };
    [
        (mx.square() + my.square()).sum() * scale,
        c.square().sum() * scale,
        k.square().sum() * scale,
        eps_loss.sum() * scale,
    ]
}

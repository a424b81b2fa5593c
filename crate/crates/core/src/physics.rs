//! Nondimensional steady RANS k-ε residuals and reference-scale handling.
//!
//! The residuals are generic over [`Real`], so the same code evaluates a
//! single point from [`Jet2`]s and a whole collocation batch on the tape.
//!
//! Conventions:
//! - convection in advective form `ρ(u·∇φ)`;
//! - momentum viscous term `μ_eff ∇²u` with pointwise `μ_eff = μ + μ_t`;
//! - scalar diffusion `∇·(Γ∇φ) = Γ∇²φ + ∇Γ·∇φ` with `Γ = μ + μ_t/σ`;
//! - `P_k = μ_t (2u_x² + 2v_y² + (u_y + v_x)²)` and `P_ε = P_k`;
//! - denominators `ε` (in μ_t) and `k` (in ε/k) are clamped at `eps_floor`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Jet2, Real};
use crate::network::FieldJets;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<f64, PhysicsError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(PhysicsError::NonPositive { name, value })
    }
}

/// `Re = ρ u_inlet L / μ`.
pub fn reynolds(rho: f64, u_inlet: f64, length: f64, mu: f64) -> Result<f64, PhysicsError> {
    Ok(positive("rho", rho)? * positive("u_inlet", u_inlet)? * positive("length", length)? / positive("mu", mu)?)
}

/// Density and molecular viscosity. `mu` is a plain float for pointwise
/// evaluation and a column for batches mixing several Reynolds numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProps<T = f64> {
    pub rho: f64,
    pub mu: T,
}

impl FluidProps<f64> {
    pub fn new(rho: f64, mu: f64) -> Result<Self, PhysicsError> {
        Ok(Self {
            rho: positive("rho", rho)?,
            mu: positive("mu", mu)?,
        })
    }

    /// Nondimensional properties at Reynolds number `re`: `ρ = 1`, `μ = 1/Re`.
    pub fn from_reynolds(re: f64) -> Result<Self, PhysicsError> {
        Self::new(1.0, 1.0 / positive("Re", re)?)
    }
}

/// Sign convention for the ε destruction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsSign {
    /// `… + (C1 P_ε − C2 ρ ε) ε/k` on the right-hand side.
    #[default]
    Standard,
    /// `… + (C1 P_ε + C2 ε) ε/k`, destruction entering with a plus sign.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurbConstants {
    pub c_mu: f64,
    pub c1: f64,
    pub c2: f64,
    pub sigma_k: f64,
    pub sigma_eps: f64,
    pub eps_floor: f64,
    pub eps_sign: EpsSign,
}

impl Default for TurbConstants {
    fn default() -> Self {
        Self {
            c_mu: 0.09,
            c1: 1.44,
            c2: 1.92,
            sigma_k: 1.0,
            sigma_eps: 1.3,
            eps_floor: 1e-10,
            eps_sign: EpsSign::Standard,
        }
    }
}

/// Characteristic scales used to nondimensionalize raw fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefScales {
    pub length: f64,
    pub velocity: f64,
    #[serde(default = "one")]
    pub density: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for RefScales {
    fn default() -> Self {
        Self {
            length: 1.0,
            velocity: 1.0,
            density: 1.0,
        }
    }
}

/// Position and field values at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowState {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub k: f64,
    pub eps: f64,
}

impl RefScales {
    pub fn new(length: f64, velocity: f64, density: f64) -> Result<Self, PhysicsError> {
        Ok(Self {
            length: positive("length", length)?,
            velocity: positive("velocity", velocity)?,
            density: positive("density", density)?,
        })
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        Self::new(self.length, self.velocity, self.density).map(|_| ())
    }

    /// Dynamic pressure `ρU²`.
    pub fn pressure(&self) -> f64 {
        self.density * self.velocity * self.velocity
    }

    pub fn k(&self) -> f64 {
        self.velocity * self.velocity
    }

    pub fn eps(&self) -> f64 {
        self.velocity.powi(3) / self.length
    }

    pub fn nondimensionalize(&self, s: &FlowState) -> FlowState {
        FlowState {
            x: s.x / self.length,
            y: s.y / self.length,
            u: s.u / self.velocity,
            v: s.v / self.velocity,
            p: s.p / self.pressure(),
            k: s.k / self.k(),
            eps: s.eps / self.eps(),
        }
    }

    pub fn denormalize(&self, s: &FlowState) -> FlowState {
        FlowState {
            x: s.x * self.length,
            y: s.y * self.length,
            u: s.u * self.velocity,
            v: s.v * self.velocity,
            p: s.p * self.pressure(),
            k: s.k * self.k(),
            eps: s.eps * self.eps(),
        }
    }
}

/// Value and the spatial derivatives the residuals read.
#[derive(Debug, Clone, Copy)]
pub struct JetParts<T> {
    pub val: T,
    pub dx: T,
    pub dy: T,
    pub dxx: T,
    pub dyy: T,
}

/// Value and gradient only (pressure never needs second derivatives).
#[derive(Debug, Clone, Copy)]
pub struct GradParts<T> {
    pub val: T,
    pub dx: T,
    pub dy: T,
}

impl JetParts<f64> {
    pub fn from_jet(j: &Jet2) -> Self {
        Self {
            val: j.value(),
            dx: j.grad(0),
            dy: j.grad(1),
            dxx: j.hess(0, 0),
            dyy: j.hess(1, 1),
        }
    }
}

impl GradParts<f64> {
    pub fn from_jet(j: &Jet2) -> Self {
        Self {
            val: j.value(),
            dx: j.grad(0),
            dy: j.grad(1),
        }
    }
}

/// Everything the residuals need at a point (or a batch of points).
#[derive(Debug, Clone, Copy)]
pub struct FlowJets<T> {
    pub u: JetParts<T>,
    pub v: JetParts<T>,
    pub p: GradParts<T>,
    pub k: JetParts<T>,
    pub eps: JetParts<T>,
}

impl FlowJets<f64> {
    /// From 2-D jets of the five fields.
    pub fn from_jets(u: &Jet2, v: &Jet2, p: &Jet2, k: &Jet2, eps: &Jet2) -> Self {
        Self {
            u: JetParts::from_jet(u),
            v: JetParts::from_jet(v),
            p: GradParts::from_jet(p),
            k: JetParts::from_jet(k),
            eps: JetParts::from_jet(eps),
        }
    }

    pub fn from_field_jets(f: &FieldJets) -> Self {
        Self::from_jets(&f.u, &f.v, &f.p, &f.k, &f.eps)
    }
}

/// The five residuals at a point or over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualBundle<T> {
    pub cont: T,
    pub mom_x: T,
    pub mom_y: T,
    pub k: T,
    pub eps: T,
}

impl ResidualBundle<f64> {
    pub fn is_finite(&self) -> bool {
        [self.cont, self.mom_x, self.mom_y, self.k, self.eps]
            .iter()
            .all(|r| r.is_finite())
    }
}

/// `(μ_t, μ_eff)` with the ε denominator clamped.
pub fn eddy_viscosity(k: f64, eps: f64, mu: f64, c: &TurbConstants) -> (f64, f64) {
    let mu_t = c.c_mu * k * k / eps.max(c.eps_floor);
    (mu_t, mu + mu_t)
}

fn mu_t_of<T: Real>(j: &FlowJets<T>, c: &TurbConstants) -> T {
    j.k.val * j.k.val * c.c_mu / j.eps.val.floor_at(c.eps_floor)
}

/// ∇μ_t by the quotient rule on `c_mu k²/ε` (ε clamped in denominators).
fn mu_t_grad<T: Real>(j: &FlowJets<T>, c: &TurbConstants) -> (T, T) {
    let e = j.eps.val.floor_at(c.eps_floor);
    let k = j.k.val;
    let a = k * 2.0 / e;
    let b = k * k / (e * e);
    (
        (a * j.k.dx - b * j.eps.dx) * c.c_mu,
        (a * j.k.dy - b * j.eps.dy) * c.c_mu,
    )
}

/// `∂u/∂x + ∂v/∂y`.
pub fn continuity_residual<T: Real>(j: &FlowJets<T>) -> T {
    j.u.dx + j.v.dy
}

/// `(2u_x² + 2v_y² + (u_y + v_x)²)`, the strain-rate invariant.
fn strain_invariant<T: Real>(j: &FlowJets<T>) -> T {
    let shear = j.u.dy + j.v.dx;
    j.u.dx * j.u.dx * 2.0 + j.v.dy * j.v.dy * 2.0 + shear * shear
}

/// `(P_k, P_ε)` for a given eddy viscosity.
pub fn production_terms<T: Real>(j: &FlowJets<T>, mu_t: T) -> (T, T) {
    let pk = mu_t * strain_invariant(j);
    (pk, pk)
}

fn momentum_with<T: Real>(j: &FlowJets<T>, rho: f64, mu_eff: T) -> (T, T) {
    let (u, v) = (j.u.val, j.v.val);
    let rx = (u * j.u.dx + v * j.u.dy) * rho + j.p.dx - mu_eff * (j.u.dxx + j.u.dyy);
    let ry = (u * j.v.dx + v * j.v.dy) * rho + j.p.dy - mu_eff * (j.v.dxx + j.v.dyy);
    (rx, ry)
}

/// `ρ(u·∇)u + ∇p − μ_eff ∇²u`, both components.
pub fn momentum_residual<T: Real>(j: &FlowJets<T>, props: &FluidProps<T>, c: &TurbConstants) -> (T, T) {
    let mu_eff = props.mu + mu_t_of(j, c);
    momentum_with(j, props.rho, mu_eff)
}

/// Advective transport minus diffusion `∇·((μ + μ_t/σ)∇φ)` of a scalar.
fn transport<T: Real>(
    phi: &JetParts<T>,
    j: &FlowJets<T>,
    rho: f64,
    mu: T,
    mu_t: T,
    grad_mu_t: (T, T),
    sigma: f64,
) -> T {
    let conv = (j.u.val * phi.dx + j.v.val * phi.dy) * rho;
    let gamma = mu + mu_t * (1.0 / sigma);
    let diff = gamma * (phi.dxx + phi.dyy) + (grad_mu_t.0 * phi.dx + grad_mu_t.1 * phi.dy) * (1.0 / sigma);
    conv - diff
}

fn k_with<T: Real>(j: &FlowJets<T>, rho: f64, mu: T, mu_t: T, gm: (T, T), c: &TurbConstants) -> T {
    let (pk, _) = production_terms(j, mu_t);
    transport(&j.k, j, rho, mu, mu_t, gm, c.sigma_k) - pk + j.eps.val
}

fn eps_with<T: Real>(j: &FlowJets<T>, rho: f64, mu: T, mu_t: T, gm: (T, T), c: &TurbConstants) -> T {
    let (_, pe) = production_terms(j, mu_t);
    let ratio = j.eps.val / j.k.val.floor_at(c.eps_floor);
    let source = match c.eps_sign {
        EpsSign::Standard => (pe * c.c1 - j.eps.val * (c.c2 * rho)) * ratio,
        EpsSign::Additive => (pe * c.c1 + j.eps.val * c.c2) * ratio,
    };
    transport(&j.eps, j, rho, mu, mu_t, gm, c.sigma_eps) - source
}

/// `ρ(u·∇k) − ∇·((μ + μ_t/σ_k)∇k) − P_k + ε`.
pub fn k_residual<T: Real>(j: &FlowJets<T>, props: &FluidProps<T>, c: &TurbConstants) -> T {
    k_with(j, props.rho, props.mu, mu_t_of(j, c), mu_t_grad(j, c), c)
}

/// `ρ(u·∇ε) − ∇·((μ + μ_t/σ_ε)∇ε) − (C1 P_ε ∓ C2 ρ ε) ε/k`.
pub fn eps_residual<T: Real>(j: &FlowJets<T>, props: &FluidProps<T>, c: &TurbConstants) -> T {
    eps_with(j, props.rho, props.mu, mu_t_of(j, c), mu_t_grad(j, c), c)
}

/// All five residuals, sharing the eddy-viscosity computation.
pub fn residuals<T: Real>(j: &FlowJets<T>, props: &FluidProps<T>, c: &TurbConstants) -> ResidualBundle<T> {
    let mu_t = mu_t_of(j, c);
    let gm = mu_t_grad(j, c);
    let (mom_x, mom_y) = momentum_with(j, props.rho, props.mu + mu_t);
    ResidualBundle {
        cont: continuity_residual(j),
        mom_x,
        mom_y,
        k: k_with(j, props.rho, props.mu, mu_t, gm, c),
        eps: eps_with(j, props.rho, props.mu, mu_t, gm, c),
    }
}

//! Manufactured solutions.
//!
//! Each family prescribes smooth closed-form fields parameterized by `s`
//! (playing the role of Re: `μ = 1/s`, velocity amplitude `s / S_REF`).
//! Forcing terms are assembled here from hand-derived partial derivatives;
//! none of this code goes through [`crate::physics`] or the jet machinery, so
//! comparing the two is a genuine check of the residual implementation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{BoundaryTag, DataError, Domain, FieldSample};
use crate::autodiff::{seed_inputs, Jet2};
use crate::physics::{EpsSign, FlowState, FluidProps, TurbConstants};

/// Reference value of `s` at which the velocity amplitude is one.
pub const S_REF: f64 = 4200.0;
/// Admissible range of `s`.
pub const S_RANGE: (f64, f64) = (1.0, 1.0e6);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmsFamily {
    /// Divergence-free trigonometric vortex on the unit square.
    TrigVortex,
    /// Polynomial channel profile on `[0, 2] × [0, 1]` with no-slip walls.
    PolyChannel,
}

impl MmsFamily {
    pub fn name(self) -> &'static str {
        match self {
            MmsFamily::TrigVortex => "trig-vortex",
            MmsFamily::PolyChannel => "poly-channel",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            MmsFamily::TrigVortex => Domain::new(0.0, 1.0, 0.0, 1.0),
            MmsFamily::PolyChannel => Domain::new(0.0, 2.0, 0.0, 1.0),
        }
    }

    /// Boundary tag of each rectangle edge: (left, right, bottom, top).
    pub fn edge_tags(self) -> [BoundaryTag; 4] {
        match self {
            MmsFamily::TrigVortex => [
                BoundaryTag::Inlet,
                BoundaryTag::Outlet,
                BoundaryTag::Symmetry,
                BoundaryTag::Symmetry,
            ],
            MmsFamily::PolyChannel => [
                BoundaryTag::Inlet,
                BoundaryTag::Outlet,
                BoundaryTag::Wall,
                BoundaryTag::Wall,
            ],
        }
    }
}

impl std::str::FromStr for MmsFamily {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "trig-vortex" => Ok(MmsFamily::TrigVortex),
            "poly-channel" => Ok(MmsFamily::PolyChannel),
            other => Err(DataError::Config(format!("unknown manufactured family `{other}`"))),
        }
    }
}

/// Value and partial derivatives of one scalar field.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Partials {
    pub val: f64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AnalyticFields {
    pub u: Partials,
    pub v: Partials,
    pub p: Partials,
    pub k: Partials,
    pub eps: Partials,
}

/// Source terms that the manufactured fields induce in each equation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub cont: f64,
    pub mom_x: f64,
    pub mom_y: f64,
    pub k: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsCase {
    pub family: MmsFamily,
    pub s: f64,
    pub props: FluidProps,
    pub consts: TurbConstants,
}

impl MmsCase {
    pub fn new(family: MmsFamily, s: f64, consts: TurbConstants) -> Result<Self, DataError> {
        if !(S_RANGE.0..=S_RANGE.1).contains(&s) {
            return Err(DataError::OutOfRange(format!(
                "s = {s} outside [{}, {}]",
                S_RANGE.0, S_RANGE.1
            )));
        }
        Ok(Self {
            family,
            s,
            props: FluidProps::from_reynolds(s)?,
            consts,
        })
    }

    /// Velocity amplitude.
    pub fn amplitude(&self) -> f64 {
        self.s / S_REF
    }

    pub fn domain(&self) -> Domain {
        self.family.domain()
    }

    /// Closed-form fields and partial derivatives at `(x, y)`.
    pub fn analytic(&self, x: f64, y: f64) -> AnalyticFields {
        let g = self.amplitude();
        match self.family {
            MmsFamily::TrigVortex => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                let pi2 = PI * PI;
                let u = g * sx * cy;
                let v = -g * cx * sy;
                let a = 0.5 + 0.3 * cx;
                let e = a.exp();
                let ax = -0.3 * PI * sx;
                let axx = -0.3 * pi2 * cx;
                AnalyticFields {
                    u: Partials {
                        val: u,
                        x: g * PI * cx * cy,
                        y: -g * PI * sx * sy,
                        xx: -pi2 * u,
                        yy: -pi2 * u,
                        xy: -g * pi2 * cx * sy,
                    },
                    v: Partials {
                        val: v,
                        x: g * PI * sx * sy,
                        y: -g * PI * cx * cy,
                        xx: -pi2 * v,
                        yy: -pi2 * v,
                        xy: g * pi2 * sx * cy,
                    },
                    p: Partials {
                        val: 0.25 * ((2.0 * PI * x).cos() + (2.0 * PI * y).cos()),
                        x: -0.5 * PI * (2.0 * PI * x).sin(),
                        y: -0.5 * PI * (2.0 * PI * y).sin(),
                        xx: -pi2 * (2.0 * PI * x).cos(),
                        yy: -pi2 * (2.0 * PI * y).cos(),
                        xy: 0.0,
                    },
                    k: Partials {
                        val: 0.1 + 0.05 * sx * sy,
                        x: 0.05 * PI * cx * sy,
                        y: 0.05 * PI * sx * cy,
                        xx: -0.05 * pi2 * sx * sy,
                        yy: -0.05 * pi2 * sx * sy,
                        xy: 0.05 * pi2 * cx * cy,
                    },
                    eps: Partials {
                        val: e,
                        x: e * ax,
                        y: 0.0,
                        xx: e * (ax * ax + axx),
                        yy: 0.0,
                        xy: 0.0,
                    },
                }
            }
            MmsFamily::PolyChannel => AnalyticFields {
                u: Partials {
                    val: 4.0 * g * y * (1.0 - y),
                    y: 4.0 * g * (1.0 - 2.0 * y),
                    yy: -8.0 * g,
                    ..Default::default()
                },
                v: Partials::default(),
                p: Partials {
                    val: 1.0 - 0.4 * x + 0.1 * y * y,
                    x: -0.4,
                    y: 0.2 * y,
                    yy: 0.2,
                    ..Default::default()
                },
                k: Partials {
                    val: 0.02 + 0.04 * y * (1.0 - y) + 0.01 * x,
                    x: 0.01,
                    y: 0.04 * (1.0 - 2.0 * y),
                    yy: -0.08,
                    ..Default::default()
                },
                eps: Partials {
                    val: 0.05 + 0.02 * x + 0.05 * y * y,
                    x: 0.02,
                    y: 0.1 * y,
                    yy: 0.1,
                    ..Default::default()
                },
            },
        }
    }

    /// Field values at `(x, y)`.
    pub fn state(&self, x: f64, y: f64) -> FlowState {
        let a = self.analytic(x, y);
        FlowState {
            x,
            y,
            u: a.u.val,
            v: a.v.val,
            p: a.p.val,
            k: a.k.val,
            eps: a.eps.val,
        }
    }

    /// The same closed forms evaluated through jet arithmetic, for feeding the
    /// residual evaluator: `[u, v, p, k, ε]`.
    pub fn jets(&self, x: f64, y: f64) -> [Jet2; 5] {
        let j = seed_inputs(&[x, y], &[0, 1]).expect("two inputs");
        let (jx, jy) = (j[0], j[1]);
        let c = |v: f64| Jet2::constant(v, 2);
        let g = self.amplitude();
        match self.family {
            MmsFamily::TrigVortex => {
                let (px, py) = (jx * PI, jy * PI);
                let u = px.sin() * py.cos() * g;
                let v = px.cos() * py.sin() * (-g);
                let p = ((jx * (2.0 * PI)).cos() + (jy * (2.0 * PI)).cos()) * 0.25;
                let k = px.sin() * py.sin() * 0.05 + 0.1;
                let eps = (px.cos() * 0.3 + 0.5).exp();
                [u, v, p, k, eps]
            }
            MmsFamily::PolyChannel => {
                let u = jy * (c(1.0) - jy) * (4.0 * g);
                let v = c(0.0);
                let p = c(1.0) - jx * 0.4 + jy * jy * 0.1;
                let k = c(0.02) + jy * (c(1.0) - jy) * 0.04 + jx * 0.01;
                let eps = c(0.05) + jx * 0.02 + jy * jy * 0.05;
                [u, v, p, k, eps]
            }
        }
    }

    pub fn forcing(&self, x: f64, y: f64) -> Forcing {
        forcing_from_partials(&self.analytic(x, y), &self.props, &self.consts)
    }

    /// Boundary sample at `(x, y)` with the exact field values as targets.
    pub fn boundary_sample(&self, x: f64, y: f64, tag: BoundaryTag) -> FieldSample {
        FieldSample::from_state(self.state(x, y), tag)
    }
}

/// Assembles the forcing of every equation from field partials.
///
/// Convection is taken in conservative form `∇·(ρ u φ)` and the scalar
/// diffusion as `∂x(Γ φ_x) + ∂y(Γ φ_y)`; for divergence-free velocity these
/// equal the advective forms used by the residual evaluator.
pub fn forcing_from_partials(a: &AnalyticFields, props: &FluidProps, c: &TurbConstants) -> Forcing {
    let rho = props.rho;
    let mu = props.mu;
    let (u, v, k, e) = (&a.u, &a.v, &a.k, &a.eps);

    let nu_t = c.c_mu * k.val * k.val / e.val;
    let nu_t_x = c.c_mu * k.val * (2.0 * k.x * e.val - k.val * e.x) / (e.val * e.val);
    let nu_t_y = c.c_mu * k.val * (2.0 * k.y * e.val - k.val * e.y) / (e.val * e.val);
    let visc = mu + nu_t;

    // ∂x(ρuφ) + ∂y(ρvφ)
    let flux_div = |phi: &Partials| rho * (u.x * phi.val + u.val * phi.x + v.y * phi.val + v.val * phi.y);
    let diffusion = |phi: &Partials, sigma: f64| {
        let gamma = mu + nu_t / sigma;
        (nu_t_x / sigma) * phi.x + gamma * phi.xx + (nu_t_y / sigma) * phi.y + gamma * phi.yy
    };

    let strain = 2.0 * u.x.powi(2) + 2.0 * v.y.powi(2) + (u.y + v.x).powi(2);
    let production = nu_t * strain;

    let mom_x = flux_div(u) + a.p.x - visc * (u.xx + u.yy);
    let mom_y = flux_div(v) + a.p.y - visc * (v.xx + v.yy);
    let f_k = flux_div(k) - diffusion(k, c.sigma_k) - production + e.val;
    let destruction = match c.eps_sign {
        EpsSign::Standard => c.c1 * production * e.val / k.val - c.c2 * rho * e.val * e.val / k.val,
        EpsSign::Additive => c.c1 * production * e.val / k.val + c.c2 * e.val * e.val / k.val,
    };
    let f_eps = flux_div(e) - diffusion(e, c.sigma_eps) - destruction;

    Forcing {
        cont: u.x + v.y,
        mom_x,
        mom_y,
        k: f_k,
        eps: f_eps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Richardson-extrapolated central differences of the closed-form
    /// field values only (no hand-derived partials).
    fn fd_partials(case: &MmsCase, x: f64, y: f64, h: f64) -> AnalyticFields {
        let fields = |x: f64, y: f64| {
            let s = case.state(x, y);
            [s.u, s.v, s.p, s.k, s.eps]
        };
        let d = |h: f64| {
            let c = fields(x, y);
            let (xp, xm) = (fields(x + h, y), fields(x - h, y));
            let (yp, ym) = (fields(x, y + h), fields(x, y - h));
            let (pp, pm, mp, mm) = (
                fields(x + h, y + h),
                fields(x + h, y - h),
                fields(x - h, y + h),
                fields(x - h, y - h),
            );
            (0..5)
                .map(|i| Partials {
                    val: c[i],
                    x: (xp[i] - xm[i]) / (2.0 * h),
                    y: (yp[i] - ym[i]) / (2.0 * h),
                    xx: (xp[i] - 2.0 * c[i] + xm[i]) / (h * h),
                    yy: (yp[i] - 2.0 * c[i] + ym[i]) / (h * h),
                    xy: (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h),
                })
                .collect::<Vec<_>>()
        };
        let (coarse, fine) = (d(h), d(h / 2.0));
        let rich = |a: f64, b: f64| (4.0 * b - a) / 3.0;
        let p: Vec<Partials> = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| Partials {
                val: b.val,
                x: rich(a.x, b.x),
                y: rich(a.y, b.y),
                xx: rich(a.xx, b.xx),
                yy: rich(a.yy, b.yy),
                xy: rich(a.xy, b.xy),
            })
            .collect();
        AnalyticFields {
            u: p[0],
            v: p[1],
            p: p[2],
            k: p[3],
            eps: p[4],
        }
    }

    #[test]
    fn trig_vortex_is_divergence_free() {
        let case = MmsCase::new(MmsFamily::TrigVortex, 5600.0, TurbConstants::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            assert!(case.forcing(x, y).cont.abs() < 1e-14);
        }
    }

    #[test]
    fn hand_partials_match_richardson_differences() {
        for family in [MmsFamily::TrigVortex, MmsFamily::PolyChannel] {
            let case = MmsCase::new(family, 3140.0, TurbConstants::default()).unwrap();
            for &(x, y) in &[(0.25, 0.25), (0.61, 0.13), (0.9, 0.77)] {
                let a = case.analytic(x, y);
                let f = fd_partials(&case, x, y, 1e-3);
                for (p, q) in [(a.u, f.u), (a.v, f.v), (a.p, f.p), (a.k, f.k), (a.eps, f.eps)] {
                    for (m, n) in [(p.x, q.x), (p.y, q.y), (p.xx, q.xx), (p.yy, q.yy), (p.xy, q.xy)] {
                        assert!((m - n).abs() < 1e-6 * (1.0 + m.abs()), "{family:?} {m} vs {n}");
                    }
                }
            }
        }
    }

    #[test]
    fn frozen_momentum_forcing_at_quarter_point() {
        // Closed form at this point, evaluated independently:
        //   g²π/2 − π/2 + (1 + 0.09·0.125²/e^{0.5+0.3/√2})·π² g,  g = 1/4200.
        const FROZEN: f64 = -1.568_444_710_732_541_9;
        let case = MmsCase::new(MmsFamily::TrigVortex, 1.0, TurbConstants::default()).unwrap();
        let fd = forcing_from_partials(&fd_partials(&case, 0.25, 0.25, 1e-4), &case.props, &case.consts);
        let exact = case.forcing(0.25, 0.25);
        assert!((fd.mom_x - FROZEN).abs() < 1e-6, "fd {}", fd.mom_x);
        assert!((exact.mom_x - FROZEN).abs() < 1e-12, "exact {}", exact.mom_x);
    }

    #[test]
    fn jets_match_closed_form_partials() {
        for family in [MmsFamily::TrigVortex, MmsFamily::PolyChannel] {
            let case = MmsCase::new(family, 4480.0, TurbConstants::default()).unwrap();
            let (x, y) = (0.37, 0.58);
            let a = case.analytic(x, y);
            let j = case.jets(x, y);
            for (p, jet) in [a.u, a.v, a.p, a.k, a.eps].iter().zip(&j) {
                assert!((p.val - jet.value()).abs() < 1e-14);
                assert!((p.x - jet.grad(0)).abs() < 1e-12);
                assert!((p.y - jet.grad(1)).abs() < 1e-12);
                assert!((p.xx - jet.hess(0, 0)).abs() < 1e-11);
                assert!((p.yy - jet.hess(1, 1)).abs() < 1e-11);
                assert!((p.xy - jet.hess(0, 1)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn out_of_range_parameter() {
        assert!(MmsCase::new(MmsFamily::TrigVortex, 0.5, TurbConstants::default()).is_err());
        assert!(MmsCase::new(MmsFamily::PolyChannel, 2e6, TurbConstants::default()).is_err());
    }

    #[test]
    fn fields_strictly_positive_turbulence() {
        for family in [MmsFamily::TrigVortex, MmsFamily::PolyChannel] {
            let case = MmsCase::new(family, 5600.0, TurbConstants::default()).unwrap();
            let d = case.domain();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..500 {
                let s = case.state(rng.random_range(d.xmin..=d.xmax), rng.random_range(d.ymin..=d.ymax));
                assert!(s.k > 0.01 && s.eps > 0.01);
            }
        }
    }
}

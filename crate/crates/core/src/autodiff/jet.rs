//! Second-order forward-mode jets.
//!
//! A [`Jet2`] carries a scalar value together with its gradient and its
//! (symmetric) Hessian with respect to up to three active inputs. The
//! Hessian is stored as the upper triangle in row-major order.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::AutodiffError;

/// Maximum number of active inputs a jet can differentiate against.
pub const MAX_DIM: usize = 3;
const TRI: usize = MAX_DIM * (MAX_DIM + 1) / 2;

/// Index of `(i, j)` in the packed upper triangle.
#[inline]
fn tri_index(i: usize, j: usize, dim: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * (i + 1) / 2 + j
}

/// Value, gradient and Hessian of a scalar field at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    dim: usize,
    value: f64,
    grad: [f64; MAX_DIM],
    hess: [f64; TRI],
}

/// Primitive operations available through [`jet_arith`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
    Tanh,
    Sin,
    Cos,
    Exp,
    Log,
    Softplus,
    /// Real power with a constant exponent.
    Pow(f64),
}

impl JetOp {
    fn name(self) -> &'static str {
        match self {
            JetOp::Add => "add",
            JetOp::Sub => "sub",
            JetOp::Mul => "mul",
            JetOp::Div => "div",
            JetOp::Tanh => "tanh",
            JetOp::Sin => "sin",
            JetOp::Cos => "cos",
            JetOp::Exp => "exp",
            JetOp::Log => "log",
            JetOp::Softplus => "softplus",
            JetOp::Pow(_) => "pow",
        }
    }
}

impl Jet2 {
    /// A jet with no derivative content.
    pub fn constant(value: f64, dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "jet dimension {dim} exceeds {MAX_DIM}");
        Self {
            dim,
            value,
            grad: [0.0; MAX_DIM],
            hess: [0.0; TRI],
        }
    }

    /// The independent variable `x_i` valued at `value`.
    pub fn variable(value: f64, index: usize, dim: usize) -> Self {
        assert!(index < dim, "active index {index} out of range for dim {dim}");
        let mut jet = Self::constant(value, dim);
        jet.grad[index] = 1.0;
        jet
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn grad(&self, i: usize) -> f64 {
        debug_assert!(i < self.dim);
        self.grad[i]
    }

    pub fn gradient(&self) -> &[f64] {
        &self.grad[..self.dim]
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.dim && j < self.dim);
        self.hess[tri_index(i, j, self.dim)]
    }

    /// Packed upper triangle of the Hessian.
    pub fn hessian_upper(&self) -> &[f64] {
        &self.hess[..self.dim * (self.dim + 1) / 2]
    }

    /// Laplacian over the active inputs.
    pub fn laplacian(&self) -> f64 {
        (0..self.dim).map(|i| self.hess(i, i)).sum()
    }

    fn tri_len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    fn check_dims(&self, other: &Jet2) {
        assert_eq!(
            self.dim, other.dim,
            "jet dimension mismatch: {} vs {}",
            self.dim, other.dim
        );
    }

    /// Applies a scalar function `f` given `f(v)`, `f'(v)` and `f''(v)`.
    ///
    /// grad = f'·g, hess = f''·g gᵀ + f'·H
    pub fn compose(&self, f0: f64, f1: f64, f2: f64) -> Jet2 {
        let mut out = Jet2::constant(f0, self.dim);
        for i in 0..self.dim {
            out.grad[i] = f1 * self.grad[i];
        }
        for i in 0..self.dim {
            for j in i..self.dim {
                let t = tri_index(i, j, self.dim);
                out.hess[t] = f2 * self.grad[i] * self.grad[j] + f1 * self.hess[t];
            }
        }
        out
    }

    /// `a·self + b` for constants `a`, `b`.
    pub fn affine(&self, a: f64, b: f64) -> Jet2 {
        let mut out = *self;
        out.value = a * self.value + b;
        for g in &mut out.grad[..self.dim] {
            *g *= a;
        }
        let n = self.tri_len();
        for h in &mut out.hess[..n] {
            *h *= a;
        }
        out
    }

    /// `self + a·other`, the accumulate step of a dot product.
    pub fn mul_add_scalar(&self, a: f64, other: &Jet2) -> Jet2 {
        self.check_dims(other);
        let mut out = *self;
        out.value += a * other.value;
        for i in 0..self.dim {
            out.grad[i] += a * other.grad[i];
        }
        for t in 0..self.tri_len() {
            out.hess[t] += a * other.hess[t];
        }
        out
    }

    pub fn tanh(&self) -> Jet2 {
        let t = self.value.tanh();
        let d1 = 1.0 - t * t;
        self.compose(t, d1, -2.0 * t * d1)
    }

    pub fn sin(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn cos(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.compose(c, -s, -c)
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.compose(e, e, e)
    }

    /// Natural logarithm; the caller guarantees a positive value.
    pub fn ln(&self) -> Jet2 {
        let x = self.value;
        self.compose(x.ln(), 1.0 / x, -1.0 / (x * x))
    }

    pub fn softplus(&self) -> Jet2 {
        let s = sigmoid(self.value);
        self.compose(softplus(self.value), s, s * (1.0 - s))
    }

    pub fn powf(&self, n: f64) -> Jet2 {
        let x = self.value;
        self.compose(x.powf(n), n * x.powf(n - 1.0), n * (n - 1.0) * x.powf(n - 2.0))
    }

    pub fn powi(&self, n: i32) -> Jet2 {
        let x = self.value;
        let nf = f64::from(n);
        self.compose(x.powi(n), nf * x.powi(n - 1), nf * (nf - 1.0) * x.powi(n - 2))
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.gradient().iter().all(|g| g.is_finite())
            && self.hessian_upper().iter().all(|h| h.is_finite())
    }
}

/// Numerically stable `ln(1 + eˣ)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        self.mul_add_scalar(1.0, &rhs)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self.mul_add_scalar(-1.0, &rhs)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        self.check_dims(&rhs);
        let dim = self.dim;
        let mut out = Jet2::constant(self.value * rhs.value, dim);
        for i in 0..dim {
            out.grad[i] = self.grad[i] * rhs.value + self.value * rhs.grad[i];
        }
        for i in 0..dim {
            for j in i..dim {
                let t = tri_index(i, j, dim);
                out.hess[t] = self.hess[t] * rhs.value
                    + self.grad[i] * rhs.grad[j]
                    + self.grad[j] * rhs.grad[i]
                    + self.value * rhs.hess[t];
            }
        }
        out
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, rhs: Jet2) -> Jet2 {
        let b = rhs.value;
        self * rhs.compose(1.0 / b, -1.0 / (b * b), 2.0 / (b * b * b))
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.affine(-1.0, 0.0)
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: f64) -> Jet2 {
        self.affine(1.0, rhs)
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: f64) -> Jet2 {
        self.affine(1.0, -rhs)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: f64) -> Jet2 {
        self.affine(rhs, 0.0)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        rhs.affine(self, 0.0)
    }
}

/// Seeds jets for a coordinate vector. Inputs listed in `active` carry unit
/// gradients in the order given; the rest are constants.
pub fn seed_inputs(coords: &[f64], active: &[usize]) -> Result<Vec<Jet2>, AutodiffError> {
    if active.is_empty() {
        return Err(AutodiffError::EmptyActiveSet);
    }
    if active.len() > MAX_DIM {
        return Err(AutodiffError::TooManyActive(active.len()));
    }
    for &a in active {
        if a >= coords.len() {
            return Err(AutodiffError::ActiveOutOfRange {
                index: a,
                len: coords.len(),
            });
        }
    }
    let dim = active.len();
    Ok(coords
        .iter()
        .enumerate()
        .map(|(i, &c)| match active.iter().position(|&a| a == i) {
            Some(slot) => Jet2::variable(c, slot, dim),
            None => Jet2::constant(c, dim),
        })
        .collect())
}

/// Checked jet arithmetic. Unary ops ignore `b`.
pub fn jet_arith(a: &Jet2, b: &Jet2, op: JetOp) -> Result<Jet2, AutodiffError> {
    let domain = |reason: &'static str, at: f64| AutodiffError::Domain {
        op: op.name(),
        reason,
        at,
    };
    let out = match op {
        JetOp::Add => *a + *b,
        JetOp::Sub => *a - *b,
        JetOp::Mul => *a * *b,
        JetOp::Div => {
            if b.value == 0.0 {
                return Err(domain("division by zero", b.value));
            }
            *a / *b
        }
        JetOp::Tanh => a.tanh(),
        JetOp::Sin => a.sin(),
        JetOp::Cos => a.cos(),
        JetOp::Exp => a.exp(),
        JetOp::Log => {
            if a.value <= 0.0 {
                return Err(domain("logarithm of non-positive value", a.value));
            }
            a.ln()
        }
        JetOp::Softplus => a.softplus(),
        JetOp::Pow(n) => {
            if a.value < 0.0 && n.fract() != 0.0 {
                return Err(domain("fractional power of negative value", a.value));
            }
            if a.value == 0.0 && n < 2.0 && n != 0.0 && n != 1.0 {
                return Err(domain("derivative singular at zero", a.value));
            }
            a.powf(n)
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x1(v: f64) -> Jet2 {
        Jet2::variable(v, 0, 1)
    }

    #[test]
    fn seeding_identity() {
        let jets = seed_inputs(&[2.0, 3.0], &[0, 1]).unwrap();
        assert_eq!(jets[0].gradient(), &[1.0, 0.0]);
        assert_eq!(jets[1].gradient(), &[0.0, 1.0]);
        assert!(jets.iter().all(|j| j.hessian_upper().iter().all(|&h| h == 0.0)));
        assert_eq!(jets[1].value(), 3.0);
    }

    #[test]
    fn inactive_input_has_zero_gradient() {
        let jets = seed_inputs(&[1.0, 0.0, 5600.0], &[0, 1]).unwrap();
        assert_eq!(jets[2].value(), 5600.0);
        assert_eq!(jets[2].gradient(), &[0.0, 0.0]);
    }

    #[test]
    fn one_dimensional_jet() {
        let jets = seed_inputs(&[0.5], &[0]).unwrap();
        assert_eq!(jets[0].dim(), 1);
        assert_eq!(jets[0].hessian_upper().len(), 1);
    }

    #[test]
    fn seeding_errors() {
        assert_eq!(seed_inputs(&[1.0], &[]), Err(AutodiffError::EmptyActiveSet));
        assert!(matches!(
            seed_inputs(&[1.0], &[1]),
            Err(AutodiffError::ActiveOutOfRange { index: 1, len: 1 })
        ));
    }

    #[test]
    fn square_closed_form() {
        let x = x1(3.0);
        let y = x * x;
        assert_eq!((y.value(), y.grad(0), y.hess(0, 0)), (9.0, 6.0, 2.0));
    }

    #[test]
    fn sine_at_zero() {
        let y = x1(0.0).sin();
        assert_eq!((y.value(), y.grad(0), y.hess(0, 0)), (0.0, 1.0, 0.0));
    }

    #[test]
    fn bilinear_cross_term() {
        let j = seed_inputs(&[2.0, 5.0], &[0, 1]).unwrap();
        let f = j[0] * j[1];
        assert_eq!(f.gradient(), &[5.0, 2.0]);
        assert_eq!(f.hess(0, 1), 1.0);
        assert_eq!(f.hess(1, 0), 1.0);
        assert_eq!(f.hess(0, 0), 0.0);
    }

    #[test]
    fn domain_errors_name_op_and_point() {
        let a = x1(1.0);
        let z = Jet2::constant(0.0, 1);
        match jet_arith(&a, &z, JetOp::Div) {
            Err(AutodiffError::Domain { op, at, .. }) => {
                assert_eq!(op, "div");
                assert_eq!(at, 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            jet_arith(&x1(-2.0), &z, JetOp::Log),
            Err(AutodiffError::Domain { op: "log", .. })
        ));
        assert!(jet_arith(&x1(2.0), &z, JetOp::Log).is_ok());
    }

    #[test]
    fn quotient_and_power_agree() {
        let x = x1(1.7);
        let a = Jet2::constant(1.0, 1) / (x * x);
        let b = x.powi(-2);
        let c = x.powf(-2.0);
        for (p, q) in [(a, b), (b, c)] {
            assert!((p.value() - q.value()).abs() < 1e-14);
            assert!((p.grad(0) - q.grad(0)).abs() < 1e-13);
            assert!((p.hess(0, 0) - q.hess(0, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn linearity_exact_on_dyadic_inputs() {
        let j = seed_inputs(&[0.5, 0.25], &[0, 1]).unwrap();
        let f = j[0] * j[0];
        let g = j[0] * j[1];
        let lhs = f * 2.0 + g * 4.0;
        let rhs = f.affine(2.0, 0.0) + g.affine(4.0, 0.0);
        assert_eq!(lhs, rhs);
        assert_eq!(lhs.hess(0, 0), 4.0);
        assert_eq!(lhs.hess(0, 1), 4.0);
    }
}

//! Shared pointwise evaluation over plain values and jets, so `forward` and
//! `forward_jets` perform the same value arithmetic in the same order.

use crate::autodiff::{Activation, Jet2};

pub(crate) trait Lane: Copy {
    fn constant(v: f64, like: &Self) -> Self;
    fn affine(&self, a: f64, b: f64) -> Self;
    /// `self + a·x`
    fn axpy(self, a: f64, x: &Self) -> Self;
    fn sin_cos(&self) -> (Self, Self);
    fn act(&self, act: Activation) -> Self;
}

impl Lane for f64 {
    #[inline]
    fn constant(v: f64, _: &Self) -> Self {
        v
    }

    #[inline]
    fn affine(&self, a: f64, b: f64) -> Self {
        a * self + b
    }

    #[inline]
    fn axpy(self, a: f64, x: &Self) -> Self {
        self + a * x
    }

    #[inline]
    fn sin_cos(&self) -> (Self, Self) {
        f64::sin_cos(*self)
    }

    #[inline]
    fn act(&self, act: Activation) -> Self {
        act.derivs(*self)[0]
    }
}

impl Lane for Jet2 {
    fn constant(v: f64, like: &Self) -> Self {
        Jet2::constant(v, like.dim())
    }

    fn affine(&self, a: f64, b: f64) -> Self {
        Jet2::affine(self, a, b)
    }

    fn axpy(self, a: f64, x: &Self) -> Self {
        self.mul_add_scalar(a, x)
    }

    fn sin_cos(&self) -> (Self, Self) {
        let (s, c) = self.value().sin_cos();
        (self.compose(s, c, -s), self.compose(c, -s, -c))
    }

    fn act(&self, act: Activation) -> Self {
        let d = act.derivs(self.value());
        self.compose(d[0], d[1], d[2])
    }
}

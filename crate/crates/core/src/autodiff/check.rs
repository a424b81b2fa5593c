//! Central-difference verification of jet derivatives.

use super::{seed_inputs, Jet2};

/// Comparison of jet derivatives against central differences.
///
/// Relative errors are normwise: each component's absolute error is divided
/// by the largest magnitude found in either the jet or the difference
/// estimate for that derivative order. An all-zero pair reports zero.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub grad_jet: Vec<f64>,
    pub grad_fd: Vec<f64>,
    /// Row-major full Hessians.
    pub hess_jet: Vec<f64>,
    pub hess_fd: Vec<f64>,
    pub grad_rel_err: Vec<f64>,
    pub hess_rel_err: Vec<f64>,
    pub max_grad_rel_err: f64,
    pub max_hess_rel_err: f64,
}

impl FdReport {
    pub fn max_rel_err(&self) -> f64 {
        self.max_grad_rel_err.max(self.max_hess_rel_err)
    }
}

fn normwise(a: &[f64], b: &[f64]) -> Vec<f64> {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs();
            if d == 0.0 {
                0.0
            } else {
                d / scale
            }
        })
        .collect()
}

/// Checks the jet of `f` at `point` (all coordinates active) against
/// central differences with step `h`.
///
/// Gradients are differenced from function values. Hessian entries are
/// differenced from the jet gradient at the shifted points,
/// `H_ij ≈ (g_i(x + h e_j) − g_i(x − h e_j)) / 2h`, which keeps the
/// truncation and cancellation errors at `O(h²)` and `O(ε/h)`.
pub fn check_fd<F>(f: F, point: &[f64], h: f64) -> FdReport
where
    F: Fn(&[Jet2]) -> Jet2,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let dim = point.len();
    let active: Vec<usize> = (0..dim).collect();
    let eval = |p: &[f64]| f(&seed_inputs(p, &active).expect("valid point"));

    let center = eval(point);
    let grad_jet = center.gradient().to_vec();
    let mut hess_jet = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            hess_jet[i * dim + j] = center.hess(i, j);
        }
    }

    let mut grad_fd = vec![0.0; dim];
    let mut hess_fd = vec![0.0; dim * dim];
    for j in 0..dim {
        let mut plus = point.to_vec();
        let mut minus = point.to_vec();
        plus[j] += h;
        minus[j] -= h;
        let (fp, fm) = (eval(&plus), eval(&minus));
        grad_fd[j] = (fp.value() - fm.value()) / (2.0 * h);
        for i in 0..dim {
            hess_fd[i * dim + j] = (fp.grad(i) - fm.grad(i)) / (2.0 * h);
        }
    }

    let grad_rel_err = normwise(&grad_jet, &grad_fd);
    let hess_rel_err = normwise(&hess_jet, &hess_fd);
    let max = |v: &[f64]| v.iter().fold(0.0f64, |m, &e| m.max(e));
    FdReport {
        max_grad_rel_err: max(&grad_rel_err),
        max_hess_rel_err: max(&hess_rel_err),
        grad_jet,
        grad_fd,
        hess_jet,
        hess_fd,
        grad_rel_err,
        hess_rel_err,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_of_linear_combination() {
        let r = check_fd(|j| (j[0] * 3.0 + j[1]).tanh(), &[0.1, 0.2], 1e-4);
        assert!(r.max_rel_err() < 1e-6, "{r:?}");
    }

    #[test]
    fn constant_field_is_exactly_flat() {
        let r = check_fd(|j| Jet2::constant(4.2, j[0].dim()), &[0.3, -0.7], 1e-4);
        assert!(r.grad_jet.iter().chain(&r.hess_jet).all(|&v| v == 0.0));
        assert_eq!(r.max_rel_err(), 0.0);
    }

    #[test]
    fn cubic_hessian() {
        let r = check_fd(|j| j[0] * j[0] * j[0], &[1.0], 1e-4);
        assert_eq!(r.hess_jet, vec![6.0]);
        assert!((r.hess_fd[0] - 6.0).abs() < 1e-5);
    }
}

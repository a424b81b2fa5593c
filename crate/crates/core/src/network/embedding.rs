use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::lane::Lane;
use crate::autodiff::JetLayout;

/// Fraction of the unit period an input range is mapped onto. Keeping the
/// mapped range inside half a period makes the integer-frequency features
/// injective over the training range, with room to extrapolate.
pub const INPUT_SPAN: f64 = 0.5;

/// Affine map of a raw input range `[lo, hi]` onto `[0, INPUT_SPAN]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub lo: f64,
    pub hi: f64,
}

impl AxisRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    /// `(scale, shift)` such that the mapped input is `scale·x + shift`.
    pub fn affine(&self) -> (f64, f64) {
        self.affine_onto(INPUT_SPAN)
    }

    /// Like [`AxisRange::affine`], onto `[0, span]`.
    pub fn affine_onto(&self, span: f64) -> (f64, f64) {
        let width = self.hi - self.lo;
        let width = if width > 0.0 { width } else { 1.0 };
        let scale = span / width;
        (scale, -self.lo * scale)
    }

    /// Position of `x` in the range, 0 at `lo` and 1 at `hi`.
    pub fn unit_position(&self, x: f64) -> f64 {
        let width = self.hi - self.lo;
        if width > 0.0 {
            (x - self.lo) / width
        } else {
            0.0
        }
    }
}

/// Fixed Fourier features `(sin 2π f·x̂, cos 2π f·x̂)` of the mapped inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEmbedding {
    /// One row per feature pair, one column per input.
    frequencies: Array2<f64>,
    ranges: Vec<AxisRange>,
    /// Mapped width of each input axis.
    spans: Vec<f64>,
}

impl FourierEmbedding {
    /// Integer ladder `1..=n_freq` along each input axis separately, every
    /// axis mapped onto `[0, INPUT_SPAN]`.
    pub fn integer_ladder(n_freq: usize, ranges: Vec<AxisRange>) -> Self {
        let spans = vec![INPUT_SPAN; ranges.len()];
        Self::integer_ladder_with_spans(n_freq, ranges, spans)
    }

    /// Integer ladder with an explicit mapped width per axis.
    pub fn integer_ladder_with_spans(n_freq: usize, ranges: Vec<AxisRange>, spans: Vec<f64>) -> Self {
        assert_eq!(ranges.len(), spans.len(), "one span per axis");
        let n_in = ranges.len();
        let mut frequencies = Array2::zeros((n_freq * n_in, n_in));
        for axis in 0..n_in {
            for j in 0..n_freq {
                frequencies[[axis * n_freq + j, axis]] = (j + 1) as f64;
            }
        }
        Self {
            frequencies,
            ranges,
            spans,
        }
    }

    pub fn frequencies(&self) -> &Array2<f64> {
        &self.frequencies
    }

    pub fn ranges(&self) -> &[AxisRange] {
        &self.ranges
    }

    pub fn spans(&self) -> &[f64] {
        &self.spans
    }

    fn affines(&self) -> Vec<(f64, f64)> {
        self.ranges
            .iter()
            .zip(&self.spans)
            .map(|(r, &s)| r.affine_onto(s))
            .collect()
    }

    pub fn n_inputs(&self) -> usize {
        self.ranges.len()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.frequencies.nrows()
    }

    /// Embeds inputs given as lanes (plain values or jets).
    pub(crate) fn embed<L: Lane>(&self, inputs: &[L]) -> Vec<L> {
        debug_assert_eq!(inputs.len(), self.n_inputs());
        let mapped: Vec<L> = inputs
            .iter()
            .zip(self.affines())
            .map(|(x, (scale, shift))| x.affine(scale, shift))
            .collect();
        let mut out = Vec::with_capacity(self.output_dim());
        for row in self.frequencies.rows() {
            let mut theta = L::constant(0.0, &mapped[0]);
            for (a, &f) in row.iter().enumerate() {
                if f != 0.0 {
                    theta = theta.axpy(2.0 * PI * f, &mapped[a]);
                }
            }
            let (s, c) = theta.sin_cos();
            out.push(s);
            out.push(c);
        }
        out
    }

    /// Stacked jet embedding of a batch for the tape. `points[i]` holds the
    /// raw inputs of point `i`; derivatives are taken along the first two
    /// inputs only.
    pub(crate) fn embed_stacked(&self, points: &[[f64; 3]], layout: JetLayout) -> Array2<f64> {
        let n_in = self.n_inputs();
        let batch = points.len();
        let width = self.output_dim();
        let comps = layout.components();
        let mut out = Array2::zeros((comps * batch, width));
        let affine = self.affines();
        // dθ/dx and dθ/dy per feature row
        let slopes: Vec<(f64, f64)> = self
            .frequencies
            .rows()
            .into_iter()
            .map(|row| {
                let cx = 2.0 * PI * row[0] * affine[0].0;
                let cy = if n_in > 1 { 2.0 * PI * row[1] * affine[1].0 } else { 0.0 };
                (cx, cy)
            })
            .collect();
        for (i, pt) in points.iter().enumerate() {
            for (r, row) in self.frequencies.rows().into_iter().enumerate() {
                let mut theta = 0.0;
                for (a, &f) in row.iter().enumerate() {
                    if f != 0.0 {
                        let (scale, shift) = affine[a];
                        theta += 2.0 * PI * f * (scale * pt[a] + shift);
                    }
                }
                let (s, c) = theta.sin_cos();
                let (tx, ty) = slopes[r];
                let (cs, cc) = (2 * r, 2 * r + 1);
                out[[i, cs]] = s;
                out[[i, cc]] = c;
                if comps >= 3 {
                    out[[batch + i, cs]] = c * tx;
                    out[[batch + i, cc]] = -s * tx;
                    out[[2 * batch + i, cs]] = c * ty;
                    out[[2 * batch + i, cc]] = -s * ty;
                }
                if comps >= 5 {
                    out[[3 * batch + i, cs]] = -s * tx * tx;
                    out[[3 * batch + i, cc]] = -c * tx * tx;
                    out[[4 * batch + i, cs]] = -s * ty * ty;
                    out[[4 * batch + i, cc]] = -c * ty * ty;
                }
            }
        }
        out
    }
}

//! Reverse-mode tape over dense matrices.
//!
//! Every node holds an `Array2<f64>` value and the record needed to push an
//! adjoint back to its parents. Besides the usual elementwise primitives the
//! tape has fused nodes for batched second-order jets (see [`JetLayout`]):
//! a linear layer applied to stacked jet components and an activation that
//! applies the chain rule to second order. Recording a network's forward jets
//! on the tape makes the parameter gradient of any loss built from input
//! derivatives exact.

use std::cell::{Ref, RefCell};
use std::ops::{Add, Div, Mul, Neg, Sub};

use ndarray::{s, Array2, Axis};

use super::{Activation, AutodiffError, Real};

/// Component layout of a stacked batch of jets over two spatial inputs.
///
/// Rows are grouped by component: `[value | ∂x | ∂y | ∂xx | ∂yy]`, each block
/// `batch` rows tall. Mixed second derivatives are never needed by the flow
/// residuals and are not carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetLayout {
    Value,
    Gradient,
    Laplacian,
}

impl JetLayout {
    pub const fn components(self) -> usize {
        match self {
            JetLayout::Value => 1,
            JetLayout::Gradient => 3,
            JetLayout::Laplacian => 5,
        }
    }

    const fn n_grad(self) -> usize {
        match self {
            JetLayout::Value => 0,
            _ => 2,
        }
    }

    const fn second(self) -> bool {
        matches!(self, JetLayout::Laplacian)
    }
}

/// Component indices inside a stacked jet batch.
pub mod comp {
    pub const VALUE: usize = 0;
    pub const DX: usize = 1;
    pub const DY: usize = 2;
    pub const DXX: usize = 3;
    pub const DYY: usize = 4;
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param {
        offset: usize,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Unary(usize, Activation),
    Ln(usize),
    Ln1p(usize),
    Square(usize),
    FloorAt(usize, f64),
    MatMul(usize, usize),
    AddBiasRows {
        input: usize,
        bias: usize,
        rows: usize,
    },
    JetAct {
        input: usize,
        act: Activation,
        layout: JetLayout,
        batch: usize,
    },
    Block {
        input: usize,
        start: usize,
        len: usize,
    },
    Sum(usize),
    Mean(usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param { .. } => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Unary(_, act) => act.name(),
            Op::Ln(_) => "ln",
            Op::Ln1p(_) => "ln1p",
            Op::Square(_) => "square",
            Op::FloorAt(..) => "floor_at",
            Op::MatMul(..) => "matmul",
            Op::AddBiasRows { .. } => "add_bias",
            Op::JetAct { .. } => "jet_act",
            Op::Block { .. } => "block",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
        }
    }
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Append-only operation record. Nodes are topologically ordered by
/// construction since a node can only reference nodes created before it.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}

/// Parameter adjoints after a backward pass, keyed by flat offset.
#[derive(Debug, Clone)]
pub struct ParamAdjoints {
    entries: Vec<(usize, Array2<f64>)>,
}

impl ParamAdjoints {
    /// Scatters adjoints into a flat vector of length `n_params`. Parameters
    /// that received no adjoint get zeros.
    pub fn to_flat(&self, n_params: usize) -> Vec<f64> {
        let mut flat = vec![0.0; n_params];
        for (offset, adj) in &self.entries {
            for (k, &g) in adj.iter().enumerate() {
                flat[offset + k] += g;
            }
        }
        flat
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, needs_grad });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A constant input. No adjoint is propagated into it.
    pub fn constant(&self, value: Array2<f64>) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// A constant column vector.
    pub fn column(&self, values: &[f64]) -> Var<'_> {
        let col = Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape");
        self.constant(col)
    }

    /// A trainable parameter block whose entries start at `offset` in the
    /// flat parameter layout (row-major within the block).
    pub fn param(&self, value: Array2<f64>, offset: usize) -> Var<'_> {
        self.push(value, Op::Param { offset }, true)
    }

    fn unary(&self, a: Var<'_>, op: Op, f: impl Fn(&Array2<f64>) -> Array2<f64>) -> Var<'_> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.id];
            (f(&n.value), n.needs_grad)
        };
        self.push(value, op, needs)
    }

    fn binary(&self, a: Var<'_>, b: Var<'_>, op: Op, f: impl Fn(&Array2<f64>, &Array2<f64>) -> Array2<f64>) -> Var<'_> {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.id], &nodes[b.id]);
            (f(&na.value, &nb.value), na.needs_grad || nb.needs_grad)
        };
        self.push(value, op, needs)
    }

    /// Runs the backward pass from a scalar (1×1) root and returns the
    /// adjoints of every parameter node. Adjoints are local to this call, so
    /// the tape can be differentiated again.
    pub fn backward(&self, root: Var<'_>) -> Result<ParamAdjoints, AutodiffError> {
        let nodes = self.nodes.borrow();
        let shape = nodes[root.id].value.dim();
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarRoot {
                rows: shape.0,
                cols: shape.1,
            });
        }
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; root.id + 1];
        adj[root.id] = Some(Array2::ones((1, 1)));
        let mut params = Vec::new();

        for id in (0..=root.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(AutodiffError::NonFiniteAdjoint {
                    node: id,
                    op: node.op.name(),
                });
            }
            let val = |i: usize| &nodes[i].value;
            let mut acc = |i: usize, contrib: Array2<f64>| {
                if !nodes[i].needs_grad {
                    return;
                }
                match &mut adj[i] {
                    Some(existing) => *existing += &contrib,
                    slot @ None => *slot = Some(contrib),
                }
            };
            match node.op {
                Op::Leaf => {}
                Op::Param { offset } => params.push((offset, g)),
                Op::Add(a, b) => {
                    acc(b, g.clone());
                    acc(a, g);
                }
                Op::Sub(a, b) => {
                    acc(b, -&g);
                    acc(a, g);
                }
                Op::Mul(a, b) => {
                    if nodes[b].needs_grad {
                        acc(b, &g * val(a));
                    }
                    if nodes[a].needs_grad {
                        acc(a, &g * val(b));
                    }
                }
                Op::Div(a, b) => {
                    if nodes[b].needs_grad {
                        // d(a/b)/db = -out/b
                        acc(b, -(&g * &node.value) / val(b));
                    }
                    if nodes[a].needs_grad {
                        acc(a, &g / val(b));
                    }
                }
                Op::Neg(a) => acc(a, -g),
                Op::Scale(a, c) => acc(a, g * c),
                Op::AddScalar(a) => acc(a, g),
                Op::Unary(a, act) => {
                    let d = val(a).mapv(|x| act.derivs(x)[1]);
                    acc(a, g * d);
                }
                Op::Ln(a) => acc(a, g / val(a)),
                Op::Ln1p(a) => acc(a, g / val(a).mapv(|x| 1.0 + x)),
                Op::Square(a) => acc(a, g * val(a) * 2.0),
                Op::FloorAt(a, floor) => {
                    let mut d = g;
                    d.zip_mut_with(val(a), |gi, &x| {
                        if x < floor {
                            *gi = 0.0;
                        }
                    });
                    acc(a, d);
                }
                Op::MatMul(a, b) => {
                    if nodes[b].needs_grad {
                        acc(b, val(a).t().dot(&g));
                    }
                    if nodes[a].needs_grad {
                        acc(a, g.dot(&val(b).t()));
                    }
                }
                Op::AddBiasRows { input, bias, rows } => {
                    if nodes[bias].needs_grad {
                        let db = g.slice(s![..rows, ..]).sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc(bias, db);
                    }
                    acc(input, g);
                }
                Op::JetAct {
                    input,
                    act,
                    layout,
                    batch,
                } => acc(input, jet_act_backward(val(input), &g, act, layout, batch)),
                Op::Block { input, start, len } => {
                    let mut full = Array2::zeros(val(input).dim());
                    full.slice_mut(s![start..start + len, ..]).assign(&g);
                    acc(input, full);
                }
                Op::Sum(a) => {
                    let s = g[[0, 0]];
                    acc(a, Array2::from_elem(val(a).dim(), s));
                }
                Op::Mean(a) => {
                    let n = val(a).len() as f64;
                    let s = g[[0, 0]] / n;
                    acc(a, Array2::from_elem(val(a).dim(), s));
                }
            }
        }
        params.sort_by_key(|(offset, _)| *offset);
        Ok(ParamAdjoints { entries: params })
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrow of this node's value.
    pub fn value(&self) -> Ref<'t, Array2<f64>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self) -> f64 {
        let v = self.value();
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().dim()
    }

    fn same_shape(&self, other: &Var<'t>, what: &str) {
        let (a, b) = (self.shape(), other.shape());
        assert_eq!(a, b, "shape mismatch in {what}: {a:?} vs {b:?}");
    }

    pub fn exp(self) -> Var<'t> {
        self.activate(Activation::Exp)
    }

    pub fn tanh(self) -> Var<'t> {
        self.activate(Activation::Tanh)
    }

    pub fn sin(self) -> Var<'t> {
        self.activate(Activation::Sin)
    }

    pub fn softplus(self) -> Var<'t> {
        self.activate(Activation::Softplus)
    }

    /// Elementwise application of an activation.
    pub fn activate(self, act: Activation) -> Var<'t> {
        self.tape
            .unary(self, Op::Unary(self.id, act), |v| v.mapv(|x| act.derivs(x)[0]))
    }

    pub fn ln(self) -> Var<'t> {
        self.tape.unary(self, Op::Ln(self.id), |v| v.mapv(f64::ln))
    }

    pub fn ln_1p(self) -> Var<'t> {
        self.tape.unary(self, Op::Ln1p(self.id), |v| v.mapv(f64::ln_1p))
    }

    pub fn square(self) -> Var<'t> {
        self.tape.unary(self, Op::Square(self.id), |v| v.mapv(|x| x * x))
    }

    pub fn sum(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Sum(self.id), |v| Array2::from_elem((1, 1), v.sum()))
    }

    /// Mean over all entries. Panics on an empty node.
    pub fn mean(self) -> Var<'t> {
        self.tape.unary(self, Op::Mean(self.id), |v| {
            assert!(!v.is_empty(), "mean of empty node");
            Array2::from_elem((1, 1), v.sum() / v.len() as f64)
        })
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self, rhs, Op::MatMul(self.id, rhs.id), |a, b| a.dot(b))
    }

    /// Adds a 1×n bias row to the first `rows` rows only.
    pub fn add_bias_rows(self, bias: Var<'t>, rows: usize) -> Var<'t> {
        self.tape.binary(
            self,
            bias,
            Op::AddBiasRows {
                input: self.id,
                bias: bias.id,
                rows,
            },
            |a, b| {
                let mut out = a.clone();
                out.slice_mut(s![..rows, ..])
                    .zip_mut_with(&b.broadcast((rows, b.ncols())).expect("bias width"), |o, &bv| *o += bv);
                out
            },
        )
    }

    /// Jet-aware activation over a stacked batch (see [`JetLayout`]).
    pub fn jet_activate(self, act: Activation, layout: JetLayout, batch: usize) -> Var<'t> {
        self.tape.unary(
            self,
            Op::JetAct {
                input: self.id,
                act,
                layout,
                batch,
            },
            |v| jet_act_forward(v, act, layout, batch),
        )
    }

    /// Linear layer applied to a stacked jet batch: the weight multiplies
    /// every component, the bias only touches the value block.
    pub fn jet_linear(self, weight: Var<'t>, bias: Var<'t>, batch: usize) -> Var<'t> {
        self.matmul(weight).add_bias_rows(bias, batch)
    }

    /// Rows `start .. start+len`.
    pub fn rows(self, start: usize, len: usize) -> Var<'t> {
        self.tape.unary(
            self,
            Op::Block {
                input: self.id,
                start,
                len,
            },
            |v| v.slice(s![start..start + len, ..]).to_owned(),
        )
    }

    /// Component block `c` of a stacked jet batch.
    pub fn component(self, c: usize, batch: usize) -> Var<'t> {
        self.rows(c * batch, batch)
    }
}

fn jet_act_forward(z: &Array2<f64>, act: Activation, layout: JetLayout, batch: usize) -> Array2<f64> {
    let width = z.ncols();
    let blk = batch * width;
    assert_eq!(z.nrows(), batch * layout.components(), "jet stack height");
    let z = z.as_standard_layout();
    let zs = z.as_slice().expect("standard layout");
    let mut out = Array2::<f64>::zeros(z.dim());
    let os = out.as_slice_mut().expect("standard layout");
    let n = layout.n_grad();
    for k in 0..blk {
        let d = act.derivs(zs[k]);
        os[k] = d[0];
        for i in 0..n {
            let g = zs[(1 + i) * blk + k];
            os[(1 + i) * blk + k] = d[1] * g;
            if layout.second() {
                let h = zs[(1 + n + i) * blk + k];
                os[(1 + n + i) * blk + k] = d[2] * g * g + d[1] * h;
            }
        }
    }
    out
}

fn jet_act_backward(
    z: &Array2<f64>,
    adj: &Array2<f64>,
    act: Activation,
    layout: JetLayout,
    batch: usize,
) -> Array2<f64> {
    let width = z.ncols();
    let blk = batch * width;
    let z = z.as_standard_layout();
    let adj = adj.as_standard_layout();
    let zs = z.as_slice().expect("standard layout");
    let a = adj.as_slice().expect("standard layout");
    let mut out = Array2::<f64>::zeros(z.dim());
    let os = out.as_slice_mut().expect("standard layout");
    let n = layout.n_grad();
    for k in 0..blk {
        let d = act.derivs(zs[k]);
        let mut dv = a[k] * d[1];
        for i in 0..n {
            let gi = (1 + i) * blk + k;
            let g = zs[gi];
            dv += a[gi] * g * d[2];
            let mut dg = a[gi] * d[1];
            if layout.second() {
                let hi = (1 + n + i) * blk + k;
                let h = zs[hi];
                dv += a[hi] * (d[3] * g * g + d[2] * h);
                dg += a[hi] * 2.0 * d[2] * g;
                os[hi] = a[hi] * d[1];
            }
            os[gi] = dg;
        }
        os[k] = dv;
    }
    out
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident, $f:expr) => {
        impl<'t> $trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.same_shape(&rhs, stringify!($method));
                self.tape.binary(self, rhs, Op::$variant(self.id, rhs.id), $f)
            }
        }
    };
}

binop!(Add, add, Add, |a, b| a + b);
binop!(Sub, sub, Sub, |a, b| a - b);
binop!(Mul, mul, Mul, |a, b| a * b);
binop!(Div, div, Div, |a, b| a / b);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(self, Op::Neg(self.id), |v| -v)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.tape.unary(self, Op::Scale(self.id, c), |v| v * c)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.tape.unary(self, Op::AddScalar(self.id), |v| v + c)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self + (-c)
    }
}

impl<'t> Real for Var<'t> {
    fn floor_at(self, floor: f64) -> Self {
        self.tape
            .unary(self, Op::FloorAt(self.id, floor), |v| v.mapv(|x| x.max(floor)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quadratic_gradient() {
        let tape = Tape::new();
        let theta = tape.param(array![[4.0]], 0);
        let loss = theta.square();
        let g = tape.backward(loss).unwrap().to_flat(1);
        assert_eq!(g, vec![8.0]);
    }

    #[test]
    fn separable_gradient() {
        let tape = Tape::new();
        let theta = tape.param(array![[1.0, 2.0]], 0);
        let loss = theta.square().sum();
        assert_eq!(tape.backward(loss).unwrap().to_flat(2), vec![2.0, 4.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let tape = Tape::new();
        let theta = tape.param(array![[1.0, 2.0]], 0);
        let y = theta.square();
        assert_eq!(
            tape.backward(y).unwrap_err(),
            AutodiffError::NonScalarRoot { rows: 1, cols: 2 }
        );
    }

    #[test]
    fn nan_adjoint_reports_first_node() {
        let tape = Tape::new();
        let theta = tape.param(array![[0.0]], 0);
        let zero = tape.constant(array![[0.0]]);
        // d/dθ ln(θ) at 0 is infinite
        let loss = (theta.ln() + zero).sum();
        match tape.backward(loss) {
            Err(AutodiffError::NonFiniteAdjoint { op, .. }) => assert_eq!(op, "param"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tape_is_reusable() {
        let tape = Tape::new();
        let theta = tape.param(array![[3.0]], 0);
        let loss = (theta * theta * theta).sum();
        let a = tape.backward(loss).unwrap().to_flat(1);
        let b = tape.backward(loss).unwrap().to_flat(1);
        assert_eq!(a, b);
        assert_eq!(a, vec![27.0]);
    }

    #[test]
    fn division_and_floor() {
        let tape = Tape::new();
        let a = tape.param(array![[2.0, 1e-12]], 0);
        let b = tape.param(array![[4.0, 1.0]], 2);
        let q = (a / b.floor_at(1e-10)).sum();
        let g = tape.backward(q).unwrap().to_flat(4);
        assert_eq!(g[0], 0.25);
        assert_eq!(g[1], 1.0);
        assert_eq!(g[2], -2.0 / 16.0);
        let f = a.floor_at(1e-10).sum();
        let g = tape.backward(f).unwrap().to_flat(4);
        assert_eq!(&g[..2], &[1.0, 0.0]);
    }

    #[test]
    fn bias_only_reaches_value_rows() {
        let tape = Tape::new();
        let x = tape.constant(array![[1.0], [2.0], [3.0], [4.0]]);
        let w = tape.param(array![[2.0]], 0);
        let b = tape.param(array![[0.5]], 1);
        let y = x.jet_linear(w, b, 2);
        assert_eq!(*y.value(), array![[2.5], [4.5], [6.0], [8.0]]);
        let g = tape.backward(y.sum()).unwrap().to_flat(2);
        assert_eq!(g, vec![10.0, 2.0]);
    }
}

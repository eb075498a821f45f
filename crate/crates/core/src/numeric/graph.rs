//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] is an append-only arena of nodes. Nodes are created in
//! evaluation order, so the arena order is already a topological order and
//! [`Graph::backward`] simply walks it in reverse. A graph is meant to live for
//! one forward/backward pass and is confined to a single thread.

use std::sync::Arc;

use super::matrix::{dot, gemm_nn, gemm_nt, gemm_tn, Matrix};
use super::rng::Rng;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Numerically safe logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Which columns of each row take part in a softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftmaxMask {
    /// Every column.
    None,
    /// Row `i` sees columns `j <= i`.
    Causal,
    /// Every row sees columns `j < k`.
    Prefix(usize),
}

impl SoftmaxMask {
    #[inline]
    fn allowed_len(self, row: usize, cols: usize) -> usize {
        match self {
            SoftmaxMask::None => cols,
            SoftmaxMask::Causal => (row + 1).min(cols),
            SoftmaxMask::Prefix(k) => k.min(cols),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Activation(Var, Activation),
    Softmax { x: Var, mask: SoftmaxMask, temperature: f64 },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Matrix, inv_std: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    Reshape(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Gather { x: Var, indices: Vec<usize> },
    PoolRows { weights: Var, values: Var },
    NormalizeRows { x: Var, norms: Vec<f64>, eps: f64 },
    RowDot(Var, Var),
    Sum(Var),
    Mean(Var),
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::MatMulNt(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulCol(a, b)
            | Op::RowDot(a, b) => vec![*a, *b],
            Op::Scale(x, _)
            | Op::Activation(x, _)
            | Op::Softmax { x, .. }
            | Op::Dropout { x, .. }
            | Op::Reshape(x)
            | Op::SliceCols { x, .. }
            | Op::Gather { x, .. }
            | Op::NormalizeRows { x, .. }
            | Op::Sum(x)
            | Op::Mean(x) => vec![*x],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::ConcatCols(xs) => xs.clone(),
            Op::PoolRows { weights, values } => vec![*weights, *values],
        }
    }
}

/// One value in the computation: its matrix, accumulated gradient and producer.
#[derive(Debug)]
pub struct Node {
    value: Arc<Matrix>,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

impl Node {
    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn grad(&self) -> Option<&Matrix> {
        self.grad.as_ref()
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.op, Op::Leaf)
    }

    pub fn parents(&self) -> Vec<Var> {
        self.op.parents()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

macro_rules! shape_check {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(Error::Shape(format!($($arg)*)));
        }
    };
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a node, or `None` if no backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient of `v`, zeros if nothing flowed into it.
    pub fn grad_or_zeros(&self, v: Var) -> Matrix {
        let (r, c) = self.shape(v);
        self.grad(v).cloned().unwrap_or_else(|| Matrix::zeros(r, c))
    }

    /// A differentiable leaf (a parameter or an input we want gradients for).
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A constant leaf that shares storage with the caller.
    pub fn shared_constant(&mut self, value: Arc<Matrix>) -> Var {
        self.nodes.push(Node { value, grad: None, requires_grad: false, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: Arc::new(value), grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn push_op(&mut self, value: Matrix, op: Op) -> Var {
        let rg = self.needs(&op.parents());
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push_op(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push_op(out, Op::MatMulNt(a, b)))
    }

    /// `x · Wᵀ + bias`, with `W` stored out×in and `bias` a 1×out row.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = self.matmul_nt(x, weight)?;
        self.add_row(y, bias)
    }

    fn elementwise(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        let (va, vb) = (self.value(a), self.value(b));
        shape_check!(
            va.shape() == vb.shape(),
            "{name} of {}x{} and {}x{}",
            va.rows(),
            va.cols(),
            vb.rows(),
            vb.cols()
        );
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Matrix::from_vec(va.rows(), va.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise(a, b, "add", |x, y| x + y)?;
        Ok(self.push_op(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise(a, b, "sub", |x, y| x - y)?;
        Ok(self.push_op(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise(a, b, "mul", |x, y| x * y)?;
        Ok(self.push_op(out, Op::Mul(a, b)))
    }

    /// Adds a 1×n row to every row of an m×n matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (vx, vr) = (self.value(x), self.value(row));
        shape_check!(
            vr.rows() == 1 && vr.cols() == vx.cols(),
            "row broadcast of {}x{} onto {}x{}",
            vr.rows(),
            vr.cols(),
            vx.rows(),
            vx.cols()
        );
        let mut out = vx.clone();
        let r = vr.data();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(r) {
                *o += b;
            }
        }
        Ok(self.push_op(out, Op::AddRow(x, row)))
    }

    /// Multiplies row `i` of an m×n matrix by entry `i` of an m×1 column.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (vx, vc) = (self.value(x), self.value(col));
        shape_check!(
            vc.cols() == 1 && vc.rows() == vx.rows(),
            "column broadcast of {}x{} onto {}x{}",
            vc.rows(),
            vc.cols(),
            vx.rows(),
            vx.cols()
        );
        let mut out = vx.clone();
        for i in 0..out.rows() {
            let s = vc.data()[i];
            out.row_mut(i).iter_mut().for_each(|o| *o *= s);
        }
        Ok(self.push_op(out, Op::MulCol(x, col)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push_op(out, Op::Scale(x, factor))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = self.value(x).map(|v| kind.apply(v));
        self.push_op(out, Op::Activation(x, kind))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    /// Row-wise softmax of `x / temperature` over the columns admitted by `mask`.
    /// Masked columns are exactly zero.
    pub fn masked_softmax(&mut self, x: Var, mask: SoftmaxMask, temperature: f64) -> Result<Var> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Parameter(format!(
                "softmax temperature must be positive, got {temperature}"
            )));
        }
        let vx = self.value(x);
        let (rows, cols) = vx.shape();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let k = mask.allowed_len(i, cols);
            if k == 0 {
                return Err(Error::Parameter(format!("softmax row {i} has no unmasked column")));
            }
            let src = &vx.row(i)[..k];
            let m = src.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / temperature));
            let dst = &mut out.row_mut(i)[..k];
            let mut total = 0.0;
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = (s / temperature - m).exp();
                total += *d;
            }
            dst.iter_mut().for_each(|d| *d /= total);
        }
        Ok(self.push_op(out, Op::Softmax { x, mask, temperature }))
    }

    /// Normalizes every row of `x` to zero mean and unit population variance,
    /// then applies the 1×d `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (vx, vg, vb) = (self.value(x), self.value(gain), self.value(bias));
        let (rows, d) = vx.shape();
        shape_check!(d >= 1, "layer norm over zero features");
        shape_check!(
            vg.shape() == (1, d) && vb.shape() == (1, d),
            "layer norm of width {d} with gain {}x{} and bias {}x{}",
            vg.rows(),
            vg.cols(),
            vb.rows(),
            vb.cols()
        );
        let mut xhat = Matrix::zeros(rows, d);
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Matrix::zeros(rows, d);
        for i in 0..rows {
            let row = vx.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat.set(i, j, h);
                out.set(i, j, h * vg.data()[j] + vb.data()[j]);
            }
        }
        Ok(self.push_op(out, Op::LayerNorm { x, gain, bias, xhat, inv_std }))
    }

    /// Inverted dropout: in training each element is zeroed with probability
    /// `p` and survivors are scaled by `1/(1-p)`; evaluation is the identity.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout probability must lie in [0, 1), got {p}")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let vx = self.value(x);
        let mask: Vec<f64> = (0..vx.len()).map(|_| if rng.uniform() < p { 0.0 } else { keep }).collect();
        let data = vx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Matrix::from_vec(vx.rows(), vx.cols(), data)?;
        Ok(self.push_op(out, Op::Dropout { x, mask }))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(x).clone().reshape(rows, cols)?;
        Ok(self.push_op(out, Op::Reshape(x)))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let vx = self.value(x);
        shape_check!(
            start <= end && end <= vx.cols(),
            "column slice {start}..{end} of {}x{}",
            vx.rows(),
            vx.cols()
        );
        let w = end - start;
        let mut out = Matrix::zeros(vx.rows(), w);
        for i in 0..vx.rows() {
            out.row_mut(i).copy_from_slice(&vx.row(i)[start..end]);
        }
        Ok(self.push_op(out, Op::SliceCols { x, start }))
    }

    /// Side-by-side concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        shape_check!(!xs.is_empty(), "concatenation of zero matrices");
        let rows = self.value(xs[0]).rows();
        let mut cols = 0;
        for &x in xs {
            let v = self.value(x);
            shape_check!(v.rows() == rows, "concatenating {} rows with {rows} rows", v.rows());
            cols += v.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for &x in xs {
                let v = self.value(x);
                out.row_mut(i)[off..off + v.cols()].copy_from_slice(v.row(i));
                off += v.cols();
            }
        }
        Ok(self.push_op(out, Op::ConcatCols(xs.to_vec())))
    }

    /// Builds a rows×cols matrix whose k-th element is the `indices[k]`-th
    /// element (row-major) of `x`.
    pub fn gather(&mut self, x: Var, indices: Vec<usize>, rows: usize, cols: usize) -> Result<Var> {
        let vx = self.value(x);
        shape_check!(indices.len() == rows * cols, "gather of {} indices into {rows}x{cols}", indices.len());
        let n = vx.len();
        let mut data = Vec::with_capacity(indices.len());
        for &i in &indices {
            shape_check!(i < n, "gather index {i} out of bounds for {} elements", n);
            data.push(vx.data()[i]);
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push_op(out, Op::Gather { x, indices }))
    }

    /// Grouped weighted sum: `weights` is G×m, `values` is (G·m)×d, and output
    /// row `g` is `Σ_τ weights[g,τ] · values[g·m+τ]`.
    pub fn pool_rows(&mut self, weights: Var, values: Var) -> Result<Var> {
        let (vw, vv) = (self.value(weights), self.value(values));
        let (g, m) = vw.shape();
        shape_check!(
            vv.rows() == g * m,
            "pooling {g}x{m} weights over {} value rows",
            vv.rows()
        );
        let d = vv.cols();
        let mut out = Matrix::zeros(g, d);
        for gi in 0..g {
            let w = vw.row(gi);
            let dst = out.row_mut(gi);
            for (t, &a) in w.iter().enumerate() {
                for (o, &v) in dst.iter_mut().zip(vv.row(gi * m + t)) {
                    *o += a * v;
                }
            }
        }
        Ok(self.push_op(out, Op::PoolRows { weights, values }))
    }

    /// Scales each row to unit L2 norm; norms below `eps` are floored to `eps`.
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Var {
        let vx = self.value(x);
        let mut out = vx.clone();
        let mut norms = Vec::with_capacity(vx.rows());
        for i in 0..vx.rows() {
            let row = out.row_mut(i);
            let n = dot(row, row).sqrt();
            let denom = n.max(eps);
            row.iter_mut().for_each(|v| *v /= denom);
            norms.push(n);
        }
        self.push_op(out, Op::NormalizeRows { x, norms, eps })
    }

    /// Row-wise inner products, m×n by m×n → m×1.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        shape_check!(
            va.shape() == vb.shape(),
            "row dot of {}x{} and {}x{}",
            va.rows(),
            va.cols(),
            vb.rows(),
            vb.cols()
        );
        let data = (0..va.rows()).map(|i| dot(va.row(i), vb.row(i))).collect();
        let out = Matrix::from_vec(va.rows(), 1, data)?;
        Ok(self.push_op(out, Op::RowDot(a, b)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push_op(Matrix::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.sum() / v.len() as f64;
        self.push_op(Matrix::scalar(s), Op::Mean(x))
    }

    /// Back-propagates from a scalar node. Leaf gradients accumulate across
    /// calls; use [`Graph::zero_grad`] between independent passes.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.shape(output) != (1, 1) {
            let (r, c) = self.shape(output);
            return Err(Error::Contract(format!("backward requires a scalar output, got {r}x{c}")));
        }
        let n = output.0 + 1;
        let mut adj: Vec<Option<Matrix>> = (0..n).map(|_| None).collect();
        adj[output.0] = Some(Matrix::scalar(1.0));

        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.add_scaled(&g, 1.0),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut adj);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &*nodes[v.0].value;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &dyn Fn(&mut Matrix)| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = &mut adj[v.0];
            if slot.is_none() {
                let (r, c) = nodes[v.0].value.shape();
                *slot = Some(Matrix::zeros(r, c));
            }
            f(slot.as_mut().unwrap());
        };

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    acc(*a, &|d| gemm_nt(g, val(*b), d));
                }
                if wants(*b) {
                    acc(*b, &|d| gemm_tn(val(*a), g, d));
                }
            }
            Op::MatMulNt(a, b) => {
                // y = a bᵀ: da = g b, db = gᵀ a
                if wants(*a) {
                    acc(*a, &|d| gemm_nn(g, val(*b), d));
                }
                if wants(*b) {
                    acc(*b, &|d| gemm_tn(g, val(*a), d));
                }
            }
            Op::Add(a, b) => {
                acc(*a, &|d| d.add_scaled(g, 1.0));
                acc(*b, &|d| d.add_scaled(g, 1.0));
            }
            Op::Sub(a, b) => {
                acc(*a, &|d| d.add_scaled(g, 1.0));
                acc(*b, &|d| d.add_scaled(g, -1.0));
            }
            Op::Mul(a, b) => {
                acc(*a, &|d| {
                    for ((o, &gv), &bv) in d.data_mut().iter_mut().zip(g.data()).zip(val(*b).data()) {
                        *o += gv * bv;
                    }
                });
                acc(*b, &|d| {
                    for ((o, &gv), &av) in d.data_mut().iter_mut().zip(g.data()).zip(val(*a).data()) {
                        *o += gv * av;
                    }
                });
            }
            Op::AddRow(x, row) => {
                acc(*x, &|d| d.add_scaled(g, 1.0));
                acc(*row, &|d| {
                    for r in 0..g.rows() {
                        for (o, &gv) in d.data_mut().iter_mut().zip(g.row(r)) {
                            *o += gv;
                        }
                    }
                });
            }
            Op::MulCol(x, col) => {
                let c = val(*col);
                acc(*x, &|d| {
                    for r in 0..g.rows() {
                        let s = c.data()[r];
                        for (o, &gv) in d.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += gv * s;
                        }
                    }
                });
                let xv = val(*x);
                acc(*col, &|d| {
                    for r in 0..g.rows() {
                        d.data_mut()[r] += dot(g.row(r), xv.row(r));
                    }
                });
            }
            Op::Scale(x, f) => acc(*x, &|d| d.add_scaled(g, *f)),
            Op::Activation(x, kind) => {
                let (xv, yv) = (val(*x), &nodes[i].value);
                acc(*x, &|d| {
                    for (((o, &gv), &xi), &yi) in
                        d.data_mut().iter_mut().zip(g.data()).zip(xv.data()).zip(yv.data())
                    {
                        *o += gv * kind.derivative(xi, yi);
                    }
                });
            }
            Op::Softmax { x, mask, temperature } => {
                let y = &nodes[i].value;
                acc(*x, &|d| {
                    for r in 0..y.rows() {
                        let k = mask.allowed_len(r, y.cols());
                        let (yr, gr) = (&y.row(r)[..k], &g.row(r)[..k]);
                        let s = dot(yr, gr);
                        for ((o, &yi), &gi) in d.row_mut(r)[..k].iter_mut().zip(yr).zip(gr) {
                            *o += yi * (gi - s) / temperature;
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let gv = val(*gain);
                let dcols = xhat.cols();
                acc(*gain, &|d| {
                    for r in 0..g.rows() {
                        for ((o, &gi), &h) in d.data_mut().iter_mut().zip(g.row(r)).zip(xhat.row(r)) {
                            *o += gi * h;
                        }
                    }
                });
                acc(*bias, &|d| {
                    for r in 0..g.rows() {
                        for (o, &gi) in d.data_mut().iter_mut().zip(g.row(r)) {
                            *o += gi;
                        }
                    }
                });
                acc(*x, &|d| {
                    let n = dcols as f64;
                    let mut dh = vec![0.0; dcols];
                    for r in 0..g.rows() {
                        for ((h, &gi), &w) in dh.iter_mut().zip(g.row(r)).zip(gv.data()) {
                            *h = gi * w;
                        }
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h = dot(&dh, xhat.row(r));
                        let is = inv_std[r];
                        for ((o, &h), &xh) in d.row_mut(r).iter_mut().zip(&dh).zip(xhat.row(r)) {
                            *o += is / n * (n * h - sum_dh - xh * sum_dh_h);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => acc(*x, &|d| {
                for ((o, &gv), &m) in d.data_mut().iter_mut().zip(g.data()).zip(mask) {
                    *o += gv * m;
                }
            }),
            Op::Reshape(x) => acc(*x, &|d| {
                for (o, &gv) in d.data_mut().iter_mut().zip(g.data()) {
                    *o += gv;
                }
            }),
            Op::SliceCols { x, start } => acc(*x, &|d| {
                let w = g.cols();
                for r in 0..g.rows() {
                    for (o, &gv) in d.row_mut(r)[*start..*start + w].iter_mut().zip(g.row(r)) {
                        *o += gv;
                    }
                }
            }),
            Op::ConcatCols(xs) => {
                let mut off = 0;
                for &x in xs {
                    let w = val(x).cols();
                    acc(x, &|d| {
                        for r in 0..g.rows() {
                            for (o, &gv) in d.row_mut(r).iter_mut().zip(&g.row(r)[off..off + w]) {
                                *o += gv;
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::Gather { x, indices } => acc(*x, &|d| {
                let dd = d.data_mut();
                for (&ix, &gv) in indices.iter().zip(g.data()) {
                    dd[ix] += gv;
                }
            }),
            Op::PoolRows { weights, values } => {
                let (w, v) = (val(*weights), val(*values));
                let m = w.cols();
                acc(*weights, &|d| {
                    for gi in 0..w.rows() {
                        for t in 0..m {
                            d.data_mut()[gi * m + t] += dot(g.row(gi), v.row(gi * m + t));
                        }
                    }
                });
                acc(*values, &|d| {
                    for gi in 0..w.rows() {
                        for t in 0..m {
                            let a = w.get(gi, t);
                            for (o, &gv) in d.row_mut(gi * m + t).iter_mut().zip(g.row(gi)) {
                                *o += a * gv;
                            }
                        }
                    }
                });
            }
            Op::NormalizeRows { x, norms, eps } => {
                let y = &nodes[i].value;
                acc(*x, &|d| {
                    for r in 0..y.rows() {
                        let n = norms[r];
                        let (yr, gr) = (y.row(r), g.row(r));
                        if n > *eps {
                            let s = dot(yr, gr);
                            for ((o, &yi), &gi) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                                *o += (gi - yi * s) / n;
                            }
                        } else {
                            for (o, &gi) in d.row_mut(r).iter_mut().zip(gr) {
                                *o += gi / eps;
                            }
                        }
                    }
                });
            }
            Op::RowDot(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &|d| {
                    for r in 0..va.rows() {
                        let s = g.data()[r];
                        for (o, &bv) in d.row_mut(r).iter_mut().zip(vb.row(r)) {
                            *o += s * bv;
                        }
                    }
                });
                acc(*b, &|d| {
                    for r in 0..vb.rows() {
                        let s = g.data()[r];
                        for (o, &av) in d.row_mut(r).iter_mut().zip(va.row(r)) {
                            *o += s * av;
                        }
                    }
                });
            }
            Op::Sum(x) => {
                let s = g.item();
                acc(*x, &|d| d.data_mut().iter_mut().for_each(|o| *o += s));
            }
            Op::Mean(x) => {
                let n = val(*x).len() as f64;
                let s = g.item() / n;
                acc(*x, &|d| d.data_mut().iter_mut().for_each(|o| *o += s));
            }
        }
    }
}

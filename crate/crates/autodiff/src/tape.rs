//! The recording tape and its primitive operations.

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{gemm, Tensor};

/// Handle to a value recorded on a [`Tape`]. Handles are only meaningful for
/// the tape that created them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(&self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a·x + b`
    Affine(Var, f64),
    /// Tensor times a single-element tensor.
    ScalarMul(Var, Var),
    Matmul(Var, Var),
    AddBias(Var, Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize, len: usize },
    GatherCols { x: Var, idx: Vec<usize> },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Sin(Var),
    Cos(Var),
    Tan(Var),
    Softmax(Var),
    LogSoftmax(Var),
    /// Row-wise fused op: `jacs[i]` has shape `[rows, out_w·w_i]` holding
    /// ∂out[r, o] / ∂input_i[r, j] at `o·w_i + j`.
    RowLocal { inputs: Vec<Var>, jacs: Vec<Tensor> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// One forward pass worth of recorded operations.
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() }
}

/// Split `shape` around `axis` into (outer, axis extent, inner).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), param_vars: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, param: None });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A value that is not differentiated.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable input (used by gradient checks and tests).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// The current value of a stored parameter, recorded once per tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_vars.len() <= id.0 {
            self.param_vars.resize(id.0 + 1, None);
        }
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        self.param_vars[id.0] = Some(v);
        v
    }

    fn binary_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// `a·x + b` elementwise with constants `a`, `b`.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let v = self.value(x).map(|t| a * t + b);
        let rg = self.rg(x);
        self.push(v, Op::Affine(x, a), rg)
    }

    pub fn scale(&mut self, x: Var, a: f64) -> Var {
        self.affine(x, a, 0.0)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 0.0)
    }

    /// Multiply every element of `x` by the single element of `s`.
    pub fn scalar_mul(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(mismatch("scalar_mul", self.value(x), self.value(s)));
        }
        let k = self.value(s).item();
        let v = self.value(x).map(|t| t * k);
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(v, Op::ScalarMul(x, s), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = Tensor::zeros(&[m, n]);
        gemm(m, k, n, ta.data(), false, tb.data(), false, out.data_mut(), 0.0);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Matmul(a, b), rg))
    }

    /// Add a bias row `b` (shape `[m]` or `[1, m]`) to every row of `x` (`[n, m]`).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tx.shape().len() != 2 || tb.len() != tx.shape()[1] {
            return Err(mismatch("add_bias", tx, tb));
        }
        let m = tb.len();
        let mut out = tx.clone();
        for row in out.data_mut().chunks_mut(m) {
            for (o, bb) in row.iter_mut().zip(tb.data()) {
                *o += bb;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.value(*parts.first().ok_or(Error::ShapeMismatch { op: "concat", lhs: vec![], rhs: vec![] })?);
        let rank = first.shape().len();
        if axis >= rank {
            return Err(mismatch("concat", first, first));
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = 0;
        for &p in parts {
            let t = self.value(p);
            let ok = t.shape().len() == rank && (0..rank).all(|d| d == axis || t.shape()[d] == first.shape()[d]);
            if !ok {
                return Err(mismatch("concat", first, t));
            }
            shape[axis] += t.shape()[axis];
        }
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::new(&shape, data)?, Op::Concat { parts: parts.to_vec(), axis }, rg))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.shape().len() || start + len > t.shape()[axis] {
            return Err(Error::ShapeMismatch { op: "slice", lhs: t.shape().to_vec(), rhs: vec![axis, start, len] });
        }
        let (outer, ext, inner) = axis_split(t.shape(), axis);
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * ext * inner + start * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Slice { x, axis, start, len }, rg))
    }

    /// Columns `idx` of a matrix, in the given order.
    pub fn gather_cols(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = (t.rows(), t.cols());
        if t.shape().len() != 2 || idx.iter().any(|&i| i >= c) {
            return Err(Error::ShapeMismatch { op: "gather_cols", lhs: t.shape().to_vec(), rhs: idx.to_vec() });
        }
        let mut data = Vec::with_capacity(r * idx.len());
        for row in t.data().chunks(c) {
            data.extend(idx.iter().map(|&i| row[i]));
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(r, idx.len(), data)?, Op::GatherCols { x, idx: idx.to_vec() }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(v, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(v, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        let rg = self.rg(x);
        self.push(v, Op::Mean(x), rg)
    }

    /// Sum over the leading axis: `[n, m] → [1, m]`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let mut out = vec![0.0; c];
        for row in t.data().chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let rg = self.rg(x);
        self.push(Tensor::new(&[1, c], out).expect("shape"), Op::SumRows(x), rg)
    }

    /// Sum over trailing axes: `[n, m] → [n, 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let out: Vec<f64> = t.data().chunks(c).map(|r| r.iter().sum()).collect();
        let rg = self.rg(x);
        let n = out.len();
        self.push(Tensor::new(&[n, 1], out).expect("shape"), Op::SumCols(x), rg)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(v, op, rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, f64::sin, Op::Sin(x))
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, f64::cos, Op::Cos(x))
    }

    pub fn tan(&mut self, x: Var) -> Var {
        self.unary(x, f64::tan, Op::Tan(x))
    }

    fn rowwise(&self, x: Var, log: bool) -> Tensor {
        let t = self.value(x);
        let c = t.cols();
        let mut out = t.clone();
        for row in out.data_mut().chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lz = m + z.ln();
            for v in row.iter_mut() {
                *v = if log { *v - lz } else { (*v - lz).exp() };
            }
        }
        out
    }

    /// Softmax over the trailing axis of each row.
    pub fn softmax(&mut self, x: Var) -> Var {
        let v = self.rowwise(x, false);
        let rg = self.rg(x);
        self.push(v, Op::Softmax(x), rg)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let v = self.rowwise(x, true);
        let rg = self.rg(x);
        self.push(v, Op::LogSoftmax(x), rg)
    }

    /// Record a fused row-wise op with precomputed local Jacobians.
    pub(crate) fn row_local(&mut self, value: Tensor, inputs: Vec<Var>, jacs: Vec<Tensor>) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(value, Op::RowLocal { inputs, jacs }, rg)
    }

    /// Reverse sweep from a single-element output. A tape can be swept once.
    pub fn backward(&mut self, out: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::AlreadyBackpropagated);
        }
        let ov = self.value(out);
        if ov.len() != 1 {
            return Err(Error::NotScalar(ov.shape().to_vec()));
        }
        let seed = Tensor::full(ov.shape(), 1.0);
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let params = self.nodes.iter().enumerate().filter_map(|(i, n)| n.param.map(|p| (p, i))).collect();
        Ok(Gradients { grads, params })
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(e) => e.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x * y));
                acc(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::Affine(x, a) => acc(*x, g.map(|v| v * a)),
            Op::ScalarMul(x, s) => {
                let k = val(*s).item();
                acc(*x, g.map(|v| v * k));
                let ds: f64 = g.data().iter().zip(val(*x).data()).map(|(a, b)| a * b).sum();
                acc(*s, Tensor::full(val(*s).shape(), ds));
            }
            Op::Matmul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.nodes[a.0].requires_grad {
                    let mut da = Tensor::zeros(ta.shape());
                    gemm(m, n, k, g.data(), false, tb.data(), true, da.data_mut(), 0.0);
                    acc(*a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = Tensor::zeros(tb.shape());
                    gemm(k, m, n, ta.data(), true, g.data(), false, db.data_mut(), 0.0);
                    acc(*b, db);
                }
            }
            Op::AddBias(x, b) => {
                acc(*x, g.clone());
                let tb = val(*b);
                let m = tb.len();
                let mut db = Tensor::zeros(tb.shape());
                for row in g.data().chunks(m) {
                    for (d, v) in db.data_mut().iter_mut().zip(row) {
                        *d += v;
                    }
                }
                acc(*b, db);
            }
            Op::Concat { parts, axis } => {
                let (outer, _, inner) = axis_split(out.shape(), *axis);
                let total = out.len() / outer.max(1);
                let mut offset = 0;
                for &p in parts {
                    let tp = val(p);
                    let chunk = tp.shape()[*axis] * inner;
                    let mut d = Vec::with_capacity(tp.len());
                    for o in 0..outer {
                        let base = o * total + offset;
                        d.extend_from_slice(&g.data()[base..base + chunk]);
                    }
                    offset += chunk;
                    acc(p, Tensor::new(tp.shape(), d).expect("shape"));
                }
            }
            Op::Slice { x, axis, start, len } => {
                let tx = val(*x);
                let (outer, ext, inner) = axis_split(tx.shape(), *axis);
                let mut d = Tensor::zeros(tx.shape());
                let chunk = len * inner;
                for o in 0..outer {
                    let base = o * ext * inner + start * inner;
                    d.data_mut()[base..base + chunk].copy_from_slice(&g.data()[o * chunk..(o + 1) * chunk]);
                }
                acc(*x, d);
            }
            Op::GatherCols { x, idx } => {
                let tx = val(*x);
                let c = tx.cols();
                let mut d = Tensor::zeros(tx.shape());
                for (drow, grow) in d.data_mut().chunks_mut(c).zip(g.data().chunks(idx.len())) {
                    for (&j, v) in idx.iter().zip(grow) {
                        drow[j] += v;
                    }
                }
                acc(*x, d);
            }
            Op::Reshape(x) => acc(*x, g.clone().reshaped(val(*x).shape()).expect("shape")),
            Op::Sum(x) => acc(*x, Tensor::full(val(*x).shape(), g.item())),
            Op::Mean(x) => {
                let t = val(*x);
                acc(*x, Tensor::full(t.shape(), g.item() / t.len() as f64));
            }
            Op::SumRows(x) => {
                let t = val(*x);
                let c = t.cols();
                acc(*x, Tensor::from_fn(t.shape(), |k| g.data()[k % c]));
            }
            Op::SumCols(x) => {
                let t = val(*x);
                let c = t.cols();
                acc(*x, Tensor::from_fn(t.shape(), |k| g.data()[k / c]));
            }
            Op::Exp(x) => acc(*x, g.zip_map(out, |a, y| a * y)),
            Op::Log(x) => acc(*x, g.zip_map(val(*x), |a, v| a / v)),
            Op::Tanh(x) => acc(*x, g.zip_map(out, |a, y| a * (1.0 - y * y))),
            Op::Sigmoid(x) => acc(*x, g.zip_map(out, |a, y| a * y * (1.0 - y))),
            Op::Softplus(x) => acc(*x, g.zip_map(val(*x), |a, v| a * sigmoid(v))),
            Op::Sin(x) => acc(*x, g.zip_map(val(*x), |a, v| a * v.cos())),
            Op::Cos(x) => acc(*x, g.zip_map(val(*x), |a, v| -a * v.sin())),
            Op::Tan(x) => acc(*x, g.zip_map(out, |a, y| a * (1.0 + y * y))),
            Op::Softmax(x) => {
                let c = out.cols();
                let mut d = g.clone();
                for (drow, yrow) in d.data_mut().chunks_mut(c).zip(out.data().chunks(c)) {
                    let dot: f64 = drow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for (dv, y) in drow.iter_mut().zip(yrow) {
                        *dv = y * (*dv - dot);
                    }
                }
                acc(*x, d);
            }
            Op::LogSoftmax(x) => {
                let c = out.cols();
                let mut d = g.clone();
                for (drow, lrow) in d.data_mut().chunks_mut(c).zip(out.data().chunks(c)) {
                    let s: f64 = drow.iter().sum();
                    for (dv, l) in drow.iter_mut().zip(lrow) {
                        *dv -= l.exp() * s;
                    }
                }
                acc(*x, d);
            }
            Op::RowLocal { inputs, jacs } => {
                let rows = out.rows();
                let ow = out.cols();
                for (&inp, jac) in inputs.iter().zip(jacs) {
                    let t = val(inp);
                    let w = t.cols();
                    let mut d = Tensor::zeros(t.shape());
                    for r in 0..rows {
                        let grow = &g.data()[r * ow..(r + 1) * ow];
                        let jrow = &jac.data()[r * ow * w..(r + 1) * ow * w];
                        let drow = &mut d.data_mut()[r * w..(r + 1) * w];
                        for (o, &go) in grow.iter().enumerate() {
                            if go == 0.0 {
                                continue;
                            }
                            for (dj, &jv) in drow.iter_mut().zip(&jrow[o * w..(o + 1) * w]) {
                                *dj += go * jv;
                            }
                        }
                    }
                    acc(inp, d);
                }
            }
        }
    }
}

/// Gradients produced by one reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`, if `v` influenced it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Per-parameter gradients in store order; unused parameters get zeros.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        for &(p, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                out[p.0].add_assign(g);
            }
        }
        out
    }
}

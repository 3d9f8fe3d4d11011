use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::spectral;

/// Layernorm stabilizer inside the variance square root.
pub const LAYERNORM_EPS: f64 = 1e-5;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    SafeDiv(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    Sigmoid(Var),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    Broadcast(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    SoftmaxRows(Var),
    Rfft(Var),
    Irfft(Var),
}

impl Op {
    /// True when any parent carries a gradient.
    fn depends(&self, nodes: &[Node]) -> bool {
        let g = |v: &Var| nodes[v.0].grad;
        match self {
            Op::Input => false,
            Op::Param => true,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::SafeDiv(a, b) => g(a) || g(b),
            Op::ConcatCols(p) | Op::ConcatRows(p) => p.iter().any(g),
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Exp(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::Broadcast(a)
            | Op::SliceCols(a, _)
            | Op::SliceRows(a, _)
            | Op::GatherRows(a, _)
            | Op::LayerNorm { x: a, .. }
            | Op::SoftmaxRows(a)
            | Op::Rfft(a)
            | Op::Irfft(a) => g(a),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    /// Whether the node depends on a parameter; constant subgraphs are
    /// skipped by the backward sweep.
    grad: bool,
}

/// Append-only record of primitive applications.
///
/// Every node's parents precede it, so a single reverse sweep over the node
/// list visits each node exactly once in a valid order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    named: Vec<(String, Tensor)>,
}

impl Gradients {
    /// Gradient with respect to a recorded node; zeros when the node is
    /// unreachable from the loss or does not depend on any parameter.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.value(v).dims();
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.named.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Parameter gradients in registration order, shaped like the parameters.
    pub fn named(&self) -> &[(String, Tensor)] {
        &self.named
    }

    pub fn into_named(self) -> Vec<(String, Tensor)> {
        self.named
    }
}

fn broadcast_dims(
    op: &'static str,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::ShapeMismatch {
            op,
            lhs: vec![a.0, a.1],
            rhs: vec![b.0, b.1],
        }),
    }
}

#[inline]
fn bidx(dims: (usize, usize), i: usize, j: usize) -> usize {
    let r = if dims.0 == 1 { 0 } else { i };
    let c = if dims.1 == 1 { 0 } else { j };
    r * dims.1 + c
}

/// Sums a gradient of shape `g` down to the broadcast operand shape `to`.
fn reduce_to(g: &Tensor, to: (usize, usize)) -> Tensor {
    let (r, c) = g.dims();
    if (r, c) == to {
        return g.clone();
    }
    let mut out = Tensor::zeros(to.0, to.1);
    let data = out.data_mut();
    for i in 0..r {
        for j in 0..c {
            data[bidx(to, i, j)] += g.get(i, j);
        }
    }
    out
}

fn zip_broadcast(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let (ad, bd) = (a.dims(), b.dims());
    let (r, c) = broadcast_dims(op, ad, bd)?;
    let (x, y) = (a.data(), b.data());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(f(x[bidx(ad, i, j)], y[bidx(bd, i, j)]));
        }
    }
    Tensor::matrix(r, c, out)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    /// Registered parameters in insertion order.
    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        let grad = op.depends(&self.nodes);
        self.nodes.push(Node { value, op, grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant leaf (data). Constants and everything computed only from
    /// constants receive no gradient.
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        self.push("input", value, Op::Input)
    }

    /// Named learnable leaf.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Result<Var> {
        let v = self.push("param", value, Op::Param)?;
        self.params.push((name.into(), v));
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        self.push("transpose", out, Op::Transpose(a))
    }

    /// Elementwise sum with row/column/scalar broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_broadcast("add", self.value(a), self.value(b), |x, y| x + y)?;
        self.push("add", out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_broadcast("sub", self.value(a), self.value(b), |x, y| x - y)?;
        self.push("sub", out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_broadcast("mul", self.value(a), self.value(b), |x, y| x * y)?;
        self.push("mul", out, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_broadcast("div", self.value(a), self.value(b), |x, y| x / y)?;
        self.push("div", out, Op::Div(a, b))
    }

    /// Division that yields 0 (and passes no gradient) where the divisor is
    /// exactly zero.
    pub fn safe_div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_broadcast("safe_div", self.value(a), self.value(b), |x, y| {
            if y == 0.0 {
                0.0
            } else {
                x / y
            }
        })?;
        self.push("safe_div", out, Op::SafeDiv(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        self.push("scale", out, Op::Scale(a, s))
    }

    pub fn offset(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + s);
        self.push("offset", out, Op::Offset(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push("relu", out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a))
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::sin);
        self.push("sin", out, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::cos);
        self.push("cos", out, Op::Cos(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push("exp", out, Op::Exp(a))
    }

    /// Sum of all entries, `1x1`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push("sum", out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / t.len() as f64);
        self.push("mean", out, Op::Mean(a))
    }

    /// Column totals: `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(t.row_slice(i)) {
                *o += v;
            }
        }
        self.push("sum_rows", Tensor::row(out), Op::SumRows(a))
    }

    /// Row totals: `r x c -> r x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let out = (0..t.rows()).map(|i| t.row_slice(i).iter().sum()).collect();
        self.push("sum_cols", Tensor::column(out), Op::SumCols(a))
    }

    /// Explicit broadcast of a `1xc`, `rx1` or `1x1` value to `rows x cols`.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(a);
        let ad = t.dims();
        if broadcast_dims("broadcast", (rows, cols), ad)? != (rows, cols) {
            return Err(Error::ShapeMismatch {
                op: "broadcast",
                lhs: vec![rows, cols],
                rhs: vec![ad.0, ad.1],
            });
        }
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                out.push(t.data()[bidx(ad, i, j)]);
            }
        }
        let out = Tensor::matrix(rows, cols, out)?;
        self.push("broadcast", out, Op::Broadcast(a))
    }

    /// Horizontal concatenation; all parts share the row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let d = self.value(p).dims();
            if d.0 != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: vec![d.0, d.1],
                });
            }
            total += d.1;
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let out = Tensor::matrix(rows, total, out)?;
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()))
    }

    /// Vertical concatenation; all parts share the column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows, cols, out)?;
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims();
        if start >= end || end > c {
            return Err(Error::InvalidShape {
                op: "slice_cols",
                shape: vec![r, c],
                reason: format!("range {start}..{end}"),
            });
        }
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&t.row_slice(i)[start..end]);
        }
        let out = Tensor::matrix(r, end - start, out)?;
        self.push("slice_cols", out, Op::SliceCols(a, start))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims();
        if start >= end || end > r {
            return Err(Error::InvalidShape {
                op: "slice_rows",
                shape: vec![r, c],
                reason: format!("range {start}..{end}"),
            });
        }
        let out = Tensor::matrix(end - start, c, t.data()[start * c..end * c].to_vec())?;
        self.push("slice_rows", out, Op::SliceRows(a, start))
    }

    /// Row selection by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims();
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::InvalidShape {
                op: "gather_rows",
                shape: vec![r, c],
                reason: format!("row index {bad} out of range"),
            });
        }
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::matrix(idx.len(), c, out)?;
        self.push("gather_rows", out, Op::GatherRows(a, idx.to_vec()))
    }

    /// Row-wise standardization over the last axis (no affine part).
    pub fn layernorm(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims();
        let mut out = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = t.row_slice(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
            out.extend(row.iter().map(|x| (x - mean) * inv));
            inv_std.push(inv);
        }
        let out = Tensor::matrix(r, c, out)?;
        self.push("layernorm", out, Op::LayerNorm { x: a, inv_std })
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = t.row_slice(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
            let s: f64 = e.iter().sum();
            out.extend(e.into_iter().map(|x| x / s));
        }
        let out = Tensor::matrix(r, c, out)?;
        self.push("softmax_rows", out, Op::SoftmaxRows(a))
    }

    /// Packed real FFT of every row.
    pub fn rfft_rows(&mut self, a: Var) -> Result<Var> {
        let out = spectral::rfft_rows_tensor(self.value(a))?;
        self.push("rfft_rows", out, Op::Rfft(a))
    }

    /// Inverse packed real FFT of every row.
    pub fn irfft_rows(&mut self, a: Var) -> Result<Var> {
        let out = spectral::irfft_rows_tensor(self.value(a))?;
        self.push("irfft_rows", out, Op::Irfft(a))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let ls = self.value(loss);
        if ls.len() != 1 {
            return Err(Error::NotScalar(ls.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0).reshape_like(ls.shape()));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let named = self
            .params
            .iter()
            .map(|(name, v)| {
                let p = self.value(*v);
                let g = match grads.get(v.0).and_then(|g| g.as_ref()) {
                    Some(g) => g.clone(),
                    None => Tensor::zeros(p.rows(), p.cols()),
                };
                (name.clone(), g.reshape_like(p.shape()))
            })
            .collect();
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads, named })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let need = |v: Var| self.nodes[v.0].grad;
        let mut acc = |v: Var, delta: Tensor| {
            if !need(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let unary = |f: &dyn Fn(f64, f64, f64) -> f64, a: Var| -> Tensor {
            let x = self.value(a);
            let data = x
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&x, &y), &g)| f(x, y, g))
                .collect();
            Tensor::new(x.shape().to_vec(), data).expect("unary gradient shape")
        };

        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                if need(*a) {
                    acc(*a, g.matmul(&self.value(*b).transpose())?);
                }
                if need(*b) {
                    acc(*b, self.value(*a).transpose().matmul(g)?);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, reduce_to(g, self.value(*a).dims()));
                acc(*b, reduce_to(g, self.value(*b).dims()));
            }
            Op::Sub(a, b) => {
                acc(*a, reduce_to(g, self.value(*a).dims()));
                acc(*b, reduce_to(&g.map(|x| -x), self.value(*b).dims()));
            }
            Op::Mul(a, b) => {
                let ga = zip_broadcast("mul", g, self.value(*b), |g, y| g * y)?;
                let gb = zip_broadcast("mul", g, self.value(*a), |g, x| g * x)?;
                acc(*a, reduce_to(&ga, self.value(*a).dims()));
                acc(*b, reduce_to(&gb, self.value(*b).dims()));
            }
            Op::Div(a, b) | Op::SafeDiv(a, b) => {
                let safe = matches!(node.op, Op::SafeDiv(..));
                let bv = self.value(*b);
                let ga = zip_broadcast(
                    "div",
                    g,
                    bv,
                    |g, y| {
                        if safe && y == 0.0 {
                            0.0
                        } else {
                            g / y
                        }
                    },
                )?;
                // d(a/b)/db = -out / b
                let g_out = zip_broadcast("div", g, out, |g, o| g * o)?;
                let gb = zip_broadcast("div", &g_out, bv, |go, y| {
                    if safe && y == 0.0 {
                        0.0
                    } else {
                        -go / y
                    }
                })?;
                acc(*a, reduce_to(&ga, self.value(*a).dims()));
                acc(*b, reduce_to(&gb, bv.dims()));
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::Offset(a) => acc(*a, g.clone()),
            Op::Relu(a) => acc(*a, unary(&|x, _, g| if x > 0.0 { g } else { 0.0 }, *a)),
            Op::Sigmoid(a) => acc(*a, unary(&|_, y, g| g * y * (1.0 - y), *a)),
            Op::Sin(a) => acc(*a, unary(&|x, _, g| g * x.cos(), *a)),
            Op::Cos(a) => acc(*a, unary(&|x, _, g| -g * x.sin(), *a)),
            Op::Exp(a) => acc(*a, unary(&|_, y, g| g * y, *a)),
            Op::Sum(a) => {
                let (r, c) = self.value(*a).dims();
                acc(*a, Tensor::full(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).dims();
                acc(*a, Tensor::full(r, c, g.item() / (r * c) as f64));
            }
            Op::SumRows(a) | Op::SumCols(a) | Op::Broadcast(a) => {
                let ad = self.value(*a).dims();
                let (r, c) = match node.op {
                    Op::Broadcast(_) => out.dims(),
                    _ => ad,
                };
                let gd = g.dims();
                let mut full = Vec::with_capacity(r * c);
                for i in 0..r {
                    for j in 0..c {
                        full.push(g.data()[bidx(gd, i, j)]);
                    }
                }
                let full = Tensor::matrix(r, c, full)?;
                acc(*a, reduce_to(&full, ad));
            }
            Op::ConcatCols(parts) => {
                let rows = out.rows();
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut part = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        part.extend_from_slice(&g.row_slice(i)[start..start + w]);
                    }
                    acc(p, Tensor::matrix(rows, w, part)?);
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = out.cols();
                let mut start = 0;
                for &p in parts {
                    let n = self.value(p).rows() * cols;
                    acc(
                        p,
                        Tensor::matrix(n / cols.max(1), cols, g.data()[start..start + n].to_vec())?,
                    );
                    start += n;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.value(*a).dims();
                let w = out.cols();
                let mut full = Tensor::zeros(r, c);
                for i in 0..r {
                    for j in 0..w {
                        full.set(i, start + j, g.get(i, j));
                    }
                }
                acc(*a, full);
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.value(*a).dims();
                let mut full = Tensor::zeros(r, c);
                full.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(*a, full);
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = self.value(*a).dims();
                let mut full = Tensor::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        let v = full.get(i, j) + g.get(k, j);
                        full.set(i, j, v);
                    }
                }
                acc(*a, full);
            }
            Op::LayerNorm { x, inv_std } => {
                let (r, c) = out.dims();
                let mut gx = Vec::with_capacity(r * c);
                for (i, &s) in inv_std.iter().enumerate().take(r) {
                    let y = out.row_slice(i);
                    let gy = g.row_slice(i);
                    let mean_g = gy.iter().sum::<f64>() / c as f64;
                    let mean_gy = gy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    gx.extend(
                        gy.iter()
                            .zip(y)
                            .map(|(&gi, &yi)| s * (gi - mean_g - yi * mean_gy)),
                    );
                }
                acc(*x, Tensor::matrix(r, c, gx)?);
            }
            Op::SoftmaxRows(a) => {
                let (r, c) = out.dims();
                let mut gx = Vec::with_capacity(r * c);
                for i in 0..r {
                    let y = out.row_slice(i);
                    let gy = g.row_slice(i);
                    let dot: f64 = gy.iter().zip(y).map(|(a, b)| a * b).sum();
                    gx.extend(gy.iter().zip(y).map(|(&gi, &yi)| yi * (gi - dot)));
                }
                acc(*a, Tensor::matrix(r, c, gx)?);
            }
            Op::Rfft(a) => acc(*a, spectral::rfft_rows_adjoint(g)?),
            Op::Irfft(a) => acc(*a, spectral::irfft_rows_adjoint(g)?),
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

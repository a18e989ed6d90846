//! Reverse-mode autograd over a linear tape.
//!
//! Every op appends a node holding its forward value and enough of its inputs to
//! replay the chain rule. [`Tape::backward`] walks the nodes in reverse order and
//! accumulates gradients into every node that requires them. Parameters can be
//! borrowed into the tape so forward passes on shared, frozen weights never copy them.

use std::borrow::Cow;

use crate::error::{NumError, Result};
use crate::tensor::Tensor;

/// Clamp used by [`Tape::bce_loss`].
pub const BCE_EPS: f64 = 1e-7;
const LN_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Reshape(Var),
    SumAll(Var),
    SoftmaxRows { x: Var, scale: f64 },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    GatherRows { table: Var, idx: Vec<usize> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    MeanPool { x: Var, axis: usize },
    AvgPool2x2 { x: Var, frames: usize, grid: usize },
    Bce { p: Var, target: Vec<f64> },
    CrossEntropy { logits: Var, probs: Vec<f64>, targets: Vec<Option<usize>>, count: usize },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("grad shape"))
    }

    pub fn raw(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumError {
    NumError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(NumError::Invalid {
            op,
            msg: format!("expected rank {rank}, got shape {:?}", t.shape()),
        });
    }
    Ok(())
}

/// `out[m×n] += a[m×k] · b[k×n]`
fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += g[m×n] · b[k×n]ᵀ`
fn gemm_bt(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let mut bt = vec![0.0; n * k];
    for p in 0..k {
        for j in 0..n {
            bt[j * k + p] = b[p * n + j];
        }
    }
    gemm(g, &bt, out, m, n, k);
}

/// `out[k×n] += a[m×k]ᵀ · g[m×n]`
fn gemm_at(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

fn gelu(x: f64) -> (f64, f64) {
    const K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    let inner = K * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dinner = K * (1.0 + 3.0 * 0.044715 * x * x);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
    (y, dy)
}

/// Stabilized softmax of `row` (optionally only over its first `live` entries) into `out`.
fn softmax_into(row: &[f64], scale: f64, live: usize, out: &mut [f64]) {
    let max = row[..live]
        .iter()
        .map(|v| v * scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for j in 0..live {
        let e = (row[j] * scale - max).exp();
        out[j] = e;
        sum += e;
    }
    for o in &mut out[..live] {
        *o /= sum;
    }
    for o in &mut out[live..] {
        *o = 0.0;
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(NumError::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &'static str) -> Result<Var> {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, rg, name)
    }

    /// A value that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(Cow::Owned(t), Op::Leaf, false, "constant")
    }

    /// An owned leaf that receives gradient.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        self.push(Cow::Owned(t), Op::Leaf, true, "leaf")
    }

    /// A borrowed leaf; `requires_grad` false makes it a frozen parameter.
    pub fn borrowed(&mut self, t: &'a Tensor, requires_grad: bool) -> Result<Var> {
        self.push(Cow::Borrowed(t), Op::Leaf, requires_grad, "param")
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        expect_rank("matmul", ta, 2)?;
        expect_rank("matmul", tb, 2)?;
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        gemm(ta.data(), tb.data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        self.push_op(t, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        expect_rank("transpose", ta, 2)?;
        let (r, c) = (ta.rows(), ta.cols());
        let d = ta.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], out)?;
        self.push_op(t, Op::Transpose(a), &[a], "transpose")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push_op(t, Op::Add(a, b), &[a, b], "add")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push_op(t, Op::Mul(a, b), &[a, b], "mul")
    }

    /// Adds a length-`c` vector to every row of an `r×c` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        expect_rank("add_row", tx, 2)?;
        if tb.len() != tx.cols() {
            return Err(shape_err("add_row", tx, tb));
        }
        let c = tx.cols();
        let b = tb.data();
        let data = tx.data().iter().enumerate().map(|(i, v)| v + b[i % c]).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        self.push_op(t, Op::AddRow(x, bias), &[x, bias], "add_row")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * factor).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        self.push_op(t, Op::Scale(x, factor), &[x], "scale")
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| gelu(v).0).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        self.push_op(t, Op::Gelu(x), &[x], "gelu")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push_op(t, Op::Reshape(x), &[x], "reshape")
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push_op(Tensor::scalar(s), Op::SumAll(x), &[x], "sum_all")
    }

    /// Mean of several scalars.
    pub fn mean_scalars(&mut self, xs: &[Var]) -> Result<Var> {
        let (first, rest) = xs.split_first().ok_or(NumError::Empty { op: "mean_scalars" })?;
        let mut acc = *first;
        for &x in rest {
            acc = self.add(acc, x)?;
        }
        self.scale(acc, 1.0 / xs.len() as f64)
    }

    /// Row-wise softmax of `scale · x`. With `causal`, row `i` only spans columns `0..=i`
    /// and the remaining entries are exactly zero.
    pub fn softmax_rows(&mut self, x: Var, scale: f64, causal: bool) -> Result<Var> {
        let tx = self.value(x);
        expect_rank("softmax_rows", tx, 2)?;
        let (r, c) = (tx.rows(), tx.cols());
        if c == 0 {
            return Err(NumError::Empty { op: "softmax_rows" });
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let live = if causal { (i + 1).min(c) } else { c };
            softmax_into(tx.row(i), scale, live, &mut out[i * c..(i + 1) * c]);
        }
        let t = Tensor::new(vec![r, c], out)?;
        self.push_op(t, Op::SoftmaxRows { x, scale }, &[x], "softmax")
    }

    /// Softmax of a 1-D tensor, stabilized by max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        expect_rank("softmax", tx, 1)?;
        let n = tx.len();
        if n == 0 {
            return Err(NumError::Empty { op: "softmax" });
        }
        let m = self.reshape(x, &[1, n])?;
        let s = self.softmax_rows(m, 1.0, false)?;
        self.reshape(s, &[n])
    }

    /// Per-row layer normalization with learned gain and bias (both length `c`).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        expect_rank("layer_norm", tx, 2)?;
        let (r, c) = (tx.rows(), tx.cols());
        if tg.len() != c || tb.len() != c {
            return Err(shape_err("layer_norm", tx, tg));
        }
        let mut out = vec![0.0; r * c];
        let mut xhat = vec![0.0; r * c];
        let mut rstd = vec![0.0; r];
        for i in 0..r {
            let row = tx.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[i] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[i * c + j] = h;
                out[i * c + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let t = Tensor::new(vec![r, c], out)?;
        self.push_op(t, Op::LayerNorm { x, gain, bias, xhat, rstd }, &[x, gain, bias], "layer_norm")
    }

    /// Row gather; with an embedding table this is the embedding lookup.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        expect_rank("gather_rows", tt, 2)?;
        let (r, c) = (tt.rows(), tt.cols());
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(NumError::IndexOutOfRange { op: "gather_rows", index: i, bound: r });
            }
            out.extend_from_slice(tt.row(i));
        }
        let t = Tensor::new(vec![idx.len(), c], out)?;
        self.push_op(t, Op::GatherRows { table, idx: idx.to_vec() }, &[table], "gather_rows")
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.gather_rows(table, ids)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(NumError::Empty { op: "concat_rows" })?;
        let c = {
            let t = self.value(*first);
            expect_rank("concat_rows", t, 2)?;
            t.cols()
        };
        let mut out = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            expect_rank("concat_rows", t, 2)?;
            if t.cols() != c {
                return Err(shape_err("concat_rows", self.value(*first), t));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let t = Tensor::new(vec![rows, c], out)?;
        self.push_op(t, Op::ConcatRows(parts.to_vec()), parts, "concat_rows")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(NumError::Empty { op: "concat_cols" })?;
        let r = {
            let t = self.value(*first);
            expect_rank("concat_cols", t, 2)?;
            t.rows()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let t = self.value(*p);
            expect_rank("concat_cols", t, 2)?;
            if t.rows() != r {
                return Err(shape_err("concat_cols", self.value(*first), t));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; r * total];
        let mut off = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let t = self.value(*p);
            for i in 0..r {
                out[i * total + off..i * total + off + w].copy_from_slice(t.row(i));
            }
            off += w;
        }
        let t = Tensor::new(vec![r, total], out)?;
        self.push_op(t, Op::ConcatCols(parts.to_vec()), parts, "concat_cols")
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        expect_rank("slice_rows", tx, 2)?;
        if start + len > tx.rows() {
            return Err(NumError::IndexOutOfRange { op: "slice_rows", index: start + len, bound: tx.rows() });
        }
        let c = tx.cols();
        let t = Tensor::new(vec![len, c], tx.data()[start * c..(start + len) * c].to_vec())?;
        self.push_op(t, Op::SliceRows { x, start }, &[x], "slice_rows")
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        expect_rank("slice_cols", tx, 2)?;
        if start + len > tx.cols() {
            return Err(NumError::IndexOutOfRange { op: "slice_cols", index: start + len, bound: tx.cols() });
        }
        let r = tx.rows();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&tx.row(i)[start..start + len]);
        }
        let t = Tensor::new(vec![r, len], out)?;
        self.push_op(t, Op::SliceCols { x, start }, &[x], "slice_cols")
    }

    /// Arithmetic mean along `axis`; the axis is removed from the shape.
    pub fn mean_pool(&mut self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape();
        if axis >= shape.len() {
            return Err(NumError::InvalidAxis { op: "mean_pool", axis, rank: shape.len() });
        }
        let n = shape[axis];
        if n == 0 {
            return Err(NumError::Empty { op: "mean_pool" });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        let d = tx.data();
        for o in 0..outer {
            for a in 0..n {
                let src = &d[(o * n + a) * inner..(o * n + a + 1) * inner];
                for (dst, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += v;
                }
            }
        }
        for v in &mut out {
            *v /= n as f64;
        }
        let mut new_shape = shape.to_vec();
        new_shape.remove(axis);
        let t = Tensor::new(new_shape, out)?;
        self.push_op(t, Op::MeanPool { x, axis }, &[x], "mean_pool")
    }

    /// 2×2 average pooling over `frames` square maps of side `grid`, stored as
    /// `(frames·grid·grid) × c` rows in row-major (frame, y, x) order.
    pub fn avg_pool_2x2(&mut self, x: Var, frames: usize, grid: usize) -> Result<Var> {
        let tx = self.value(x);
        expect_rank("avg_pool_2x2", tx, 2)?;
        if grid % 2 != 0 {
            return Err(NumError::Invalid { op: "avg_pool_2x2", msg: format!("grid {grid} is odd") });
        }
        if tx.rows() != frames * grid * grid {
            return Err(NumError::Invalid {
                op: "avg_pool_2x2",
                msg: format!("{} rows for {frames} frames of {grid}x{grid}", tx.rows()),
            });
        }
        let c = tx.cols();
        let h = grid / 2;
        let mut out = vec![0.0; frames * h * h * c];
        for f in 0..frames {
            for y in 0..grid {
                for xx in 0..grid {
                    let src = tx.row((f * grid + y) * grid + xx);
                    let o = ((f * h + y / 2) * h + xx / 2) * c;
                    for (dst, &v) in out[o..o + c].iter_mut().zip(src) {
                        *dst += 0.25 * v;
                    }
                }
            }
        }
        let t = Tensor::new(vec![frames * h * h, c], out)?;
        self.push_op(t, Op::AvgPool2x2 { x, frames, grid }, &[x], "avg_pool_2x2")
    }

    /// Mean binary cross-entropy of probabilities `p` against `{0,1}` targets.
    /// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce_loss(&mut self, p: Var, target: &[f64]) -> Result<Var> {
        let tp = self.value(p);
        if tp.len() != target.len() {
            return Err(NumError::ShapeMismatch {
                op: "bce_loss",
                lhs: tp.shape().to_vec(),
                rhs: vec![target.len()],
            });
        }
        if tp.is_empty() {
            return Err(NumError::Empty { op: "bce_loss" });
        }
        if target.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(NumError::Invalid { op: "bce_loss", msg: "targets must be 0 or 1".into() });
        }
        let n = tp.len() as f64;
        let loss = tp
            .data()
            .iter()
            .zip(target)
            .map(|(&p, &y)| {
                let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln())
            })
            .sum::<f64>()
            / n;
        self.push_op(Tensor::scalar(loss), Op::Bce { p, target: target.to_vec() }, &[p], "bce_loss")
    }

    /// Mean token negative log-likelihood over positions where `mask` is true.
    /// Masked positions contribute exactly zero loss and zero gradient.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let tl = self.value(logits);
        expect_rank("cross_entropy", tl, 2)?;
        let (n, v) = (tl.rows(), tl.cols());
        if targets.len() != n || mask.len() != n {
            return Err(NumError::ShapeMismatch {
                op: "cross_entropy",
                lhs: tl.shape().to_vec(),
                rhs: vec![targets.len(), mask.len()],
            });
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(NumError::AllMasked);
        }
        let mut probs = vec![0.0; n * v];
        let mut kept = vec![None; n];
        let mut loss = 0.0;
        for i in 0..n {
            if !mask[i] {
                continue;
            }
            let t = targets[i];
            if t >= v {
                return Err(NumError::IndexOutOfRange { op: "cross_entropy", index: t, bound: v });
            }
            let row = &mut probs[i * v..(i + 1) * v];
            softmax_into(tl.row(i), 1.0, v, row);
            let max = tl.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + tl.row(i).iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - tl.row(i)[t];
            kept[i] = Some(t);
        }
        loss /= count as f64;
        let op = Op::CrossEntropy { logits, probs, targets: kept, count };
        self.push_op(Tensor::scalar(loss), op, &[logits], "cross_entropy")
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(NumError::Invalid {
                op: "backward",
                msg: format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        for v in grads.iter().flatten() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(NumError::NonFinite { op: "backward" });
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, node: &Node<'a>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(ga) = self.acc(grads, *a) {
                    gemm_bt(g, tb.data(), ga, m, k, n);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gemm_at(ta.data(), g, gb, m, k, n);
                }
            }
            Op::Transpose(a) => {
                let ta = self.value(*a);
                let (r, c) = (ta.rows(), ta.cols());
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(gv) = self.acc(grads, *v) {
                        for (d, s) in gv.iter_mut().zip(g) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * tb[i];
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * ta[i];
                    }
                }
            }
            Op::AddRow(x, bias) => {
                let c = self.value(*x).cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (d, s) in gx.iter_mut().zip(g) {
                        *d += s;
                    }
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    for (i, s) in g.iter().enumerate() {
                        gb[i % c] += s;
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for (d, s) in gx.iter_mut().zip(g) {
                        *d += s * f;
                    }
                }
            }
            Op::Gelu(x) => {
                let tx = self.value(*x).data();
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * gelu(tx[i]).1;
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for (d, s) in gx.iter_mut().zip(g) {
                        *d += s;
                    }
                }
            }
            Op::SumAll(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for d in gx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::SoftmaxRows { x, scale } => {
                let y = &node.value;
                let (r, c) = (y.rows(), y.cols());
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..r {
                        let yr = y.row(i);
                        let gr = &g[i * c..(i + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gx[i * c + j] += scale * yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let tg = self.value(*gain).data();
                let (r, c) = (node.value.rows(), node.value.cols());
                if let Some(ggain) = self.acc(grads, *gain) {
                    for i in 0..r {
                        for j in 0..c {
                            ggain[j] += g[i * c + j] * xhat[i * c + j];
                        }
                    }
                }
                if let Some(gbias) = self.acc(grads, *bias) {
                    for i in 0..r {
                        for j in 0..c {
                            gbias[j] += g[i * c + j];
                        }
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    let cf = c as f64;
                    for i in 0..r {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..c {
                            let d = g[i * c + j] * tg[j];
                            mean_d += d;
                            mean_dx += d * xhat[i * c + j];
                        }
                        mean_d /= cf;
                        mean_dx /= cf;
                        for j in 0..c {
                            let d = g[i * c + j] * tg[j];
                            gx[i * c + j] += rstd[i] * (d - mean_d - xhat[i * c + j] * mean_dx);
                        }
                    }
                }
            }
            Op::GatherRows { table, idx } => {
                let c = self.value(*table).cols();
                if let Some(gt) = self.acc(grads, *table) {
                    for (k, &i) in idx.iter().enumerate() {
                        for j in 0..c {
                            gt[i * c + j] += g[k * c + j];
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    if let Some(gp) = self.acc(grads, *p) {
                        for (d, s) in gp.iter_mut().zip(&g[off..off + n]) {
                            *d += s;
                        }
                    }
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let r = node.value.rows();
                let mut off = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if let Some(gp) = self.acc(grads, *p) {
                        for i in 0..r {
                            for j in 0..w {
                                gp[i * w + j] += g[i * total + off + j];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::SliceRows { x, start } => {
                let c = self.value(*x).cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (d, s) in gx[start * c..start * c + g.len()].iter_mut().zip(g) {
                        *d += s;
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let c = self.value(*x).cols();
                let (r, w) = (node.value.rows(), node.value.cols());
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..r {
                        for j in 0..w {
                            gx[i * c + start + j] += g[i * w + j];
                        }
                    }
                }
            }
            Op::MeanPool { x, axis } => {
                let shape = self.value(*x).shape();
                let n = shape[*axis];
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                if let Some(gx) = self.acc(grads, *x) {
                    let w = 1.0 / n as f64;
                    for o in 0..outer {
                        for a in 0..n {
                            for i in 0..inner {
                                gx[(o * n + a) * inner + i] += g[o * inner + i] * w;
                            }
                        }
                    }
                }
            }
            Op::AvgPool2x2 { x, frames, grid } => {
                let c = self.value(*x).cols();
                let h = grid / 2;
                if let Some(gx) = self.acc(grads, *x) {
                    for f in 0..*frames {
                        for y in 0..*grid {
                            for xx in 0..*grid {
                                let dst = ((f * grid + y) * grid + xx) * c;
                                let src = ((f * h + y / 2) * h + xx / 2) * c;
                                for j in 0..c {
                                    gx[dst + j] += 0.25 * g[src + j];
                                }
                            }
                        }
                    }
                }
            }
            Op::Bce { p, target } => {
                let tp = self.value(*p).data();
                let n = tp.len() as f64;
                if let Some(gp) = self.acc(grads, *p) {
                    for i in 0..tp.len() {
                        let raw = tp[i];
                        if raw < BCE_EPS || raw > 1.0 - BCE_EPS {
                            continue;
                        }
                        let y = target[i];
                        gp[i] += g[0] * (-(y / raw) + (1.0 - y) / (1.0 - raw)) / n;
                    }
                }
            }
            Op::CrossEntropy { logits, probs, targets, count } => {
                let v = self.value(*logits).cols();
                if let Some(gl) = self.acc(grads, *logits) {
                    let w = g[0] / *count as f64;
                    for (i, t) in targets.iter().enumerate() {
                        let Some(t) = t else { continue };
                        for j in 0..v {
                            let ind = if j == *t { 1.0 } else { 0.0 };
                            gl[i * v + j] += w * (probs[i * v + j] - ind);
                        }
                    }
                }
            }
        }
    }
}

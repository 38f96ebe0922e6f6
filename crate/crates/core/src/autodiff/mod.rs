//! Tape-based reverse-mode differentiation over a small fixed operator set.
//!
//! Nodes are evaluated eagerly when added. Leaves can be replaced with
//! [`Graph::set_value`] and the tape re-run with [`Graph::forward`], which is
//! how attacks iterate on a fixed graph. Piecewise points (ReLU at zero, fill
//! patterns) are treated as constants of the current forward pass.

mod check;
mod tensor;

pub use check::{check_directional, check_gradient, GradCheck, GradCheckReport};
pub(crate) use tensor::gemm;
pub use tensor::Tensor;

use std::borrow::Cow;

use thiserror::Error;

use crate::book::{Price, Snippet};
use crate::propagation::PreparedPlan;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("loss node has shape {0:?}, expected a scalar")]
    NotScalarLoss((usize, usize)),
    #[error("target class {target} outside {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("node is not a leaf")]
    NotALeaf,
    #[error("row {row}: zero total size in the perturbed book")]
    ZeroTotalSize { row: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// A linear map with an exact transpose, used for order propagation.
pub trait LinearOperator {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_adjoint(&self, g: &[f64], out: &mut [f64]);
}

impl LinearOperator for PreparedPlan<'_, '_> {
    fn input_len(&self) -> usize {
        self.len()
    }
    fn output_len(&self) -> usize {
        self.view().window() * self.view().slots()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.propagate_into(x, out).expect("shape checked by the graph");
    }
    fn apply_adjoint(&self, g: &[f64], out: &mut [f64]) {
        self.adjoint_into(g, out).expect("shape checked by the graph");
    }
}

/// The native book of a snippet as seen by the SWA node.
#[derive(Debug, Clone, Copy)]
pub struct BookInput<'g> {
    prices: &'g [Price],
    sizes: &'g [u32],
    slots: usize,
}

impl<'g> BookInput<'g> {
    pub fn of(snippet: &Snippet<'g>) -> Self {
        let k = 2 * snippet.levels();
        let from = snippet.start() * k;
        let to = from + snippet.window() * k;
        let s = snippet.series();
        BookInput {
            prices: &s.prices()[from..to],
            sizes: &s.sizes()[from..to],
            slots: k,
        }
    }

    pub fn rows(&self) -> usize {
        self.prices.len() / self.slots
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Native shares summed over every row and slot.
    pub fn total_size(&self) -> f64 {
        self.sizes.iter().map(|&s| s as f64).sum()
    }
}

enum Op<'g> {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: Option<NodeId> },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize, len: usize },
    Mean(NodeId),
    SoftmaxCe { logits: NodeId, targets: Vec<usize> },
    Normalize { x: NodeId, scale: f64, stride: usize },
    Swa { deltas: NodeId, book: BookInput<'g> },
    Linear { x: NodeId, op: &'g dyn LinearOperator },
}

struct Node<'g> {
    op: Op<'g>,
    value: Cow<'g, Tensor>,
    requires_grad: bool,
}

/// A computation tape. `'g` bounds borrowed leaves, books and operators.
#[derive(Default)]
pub struct Graph<'g> {
    nodes: Vec<Node<'g>>,
    grads: Vec<Option<Tensor>>,
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), GraphError> {
    if a.shape() != b.shape() {
        return Err(GraphError::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'g> Graph<'g> {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// The single entry of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0]
    }

    /// Gradient of the last [`Graph::backward`] loss; `None` for nodes that do
    /// not require gradients or were not reached.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, op: Op<'g>, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Cow::Owned(value),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn add_op(&mut self, op: Op<'g>) -> Result<NodeId, GraphError> {
        let value = self.eval(&op)?;
        let requires_grad = self.parents(&op).iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(op, value, requires_grad))
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    /// A leaf borrowing its value, avoiding a copy of large parameters.
    pub fn leaf_ref(&mut self, value: &'g Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Cow::Borrowed(value),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Replaces a leaf value; call [`Graph::forward`] to refresh dependents.
    pub fn set_value(&mut self, id: NodeId, value: Tensor) -> Result<(), GraphError> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(GraphError::NotALeaf);
        }
        node.value = Cow::Owned(value);
        Ok(())
    }

    /// Replaces the class targets of a softmax-cross-entropy node.
    pub fn set_targets(&mut self, id: NodeId, new: Vec<usize>) -> Result<(), GraphError> {
        match &mut self.nodes[id.0].op {
            Op::SoftmaxCe { targets, .. } => {
                *targets = new;
                Ok(())
            }
            _ => Err(GraphError::NotALeaf),
        }
    }

    /// `x W + b` with `x: n x d`, `W: d x k` and `b: 1 x k` added to every row.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId, GraphError> {
        self.add_op(Op::Affine { x, w, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.add_op(Op::Add(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.add_op(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId, GraphError> {
        self.add_op(Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.add_op(Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.add_op(Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        self.add_op(Op::Sigmoid(a))
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, GraphError> {
        self.add_op(Op::Concat(parts.to_vec()))
    }

    /// Columns `start..start + len`.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, GraphError> {
        self.add_op(Op::Slice { x, start, len })
    }

    /// Mean of all entries, as a `1 x 1` node.
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.add_op(Op::Mean(x))
    }

    /// Mean over rows of the cross-entropy between `softmax(logits)` and the
    /// row targets.
    pub fn softmax_ce(&mut self, logits: NodeId, targets: Vec<usize>) -> Result<NodeId, GraphError> {
        self.add_op(Op::SoftmaxCe { logits, targets })
    }

    /// Per row: subtract the first entry, divide by `scale` and average
    /// consecutive blocks of `stride` entries (the last block may be short).
    pub fn normalize(&mut self, x: NodeId, scale: f64, stride: usize) -> Result<NodeId, GraphError> {
        self.add_op(Op::Normalize {
            x,
            scale,
            stride: stride.max(1),
        })
    }

    /// Size-weighted average price per row of `book`, with `deltas`
    /// (`1 x rows*slots`) added to the native sizes.
    pub fn swa(&mut self, deltas: NodeId, book: BookInput<'g>) -> Result<NodeId, GraphError> {
        self.add_op(Op::Swa { deltas, book })
    }

    /// Applies a linear operator to a `1 x n` vector.
    pub fn linear(&mut self, x: NodeId, op: &'g dyn LinearOperator) -> Result<NodeId, GraphError> {
        self.add_op(Op::Linear { x, op })
    }

    fn parents(&self, op: &Op<'g>) -> Vec<NodeId> {
        match op {
            Op::Leaf => vec![],
            Op::Affine { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _) | Op::Relu(a) | Op::Tanh(a) | Op::Sigmoid(a) | Op::Mean(a) => vec![*a],
            Op::Concat(parts) => parts.clone(),
            Op::Slice { x, .. } | Op::Normalize { x, .. } | Op::Linear { x, .. } => vec![*x],
            Op::SoftmaxCe { logits, .. } => vec![*logits],
            Op::Swa { deltas, .. } => vec![*deltas],
        }
    }

    fn eval(&self, op: &Op<'g>) -> Result<Tensor, GraphError> {
        let v = |id: &NodeId| -> &Tensor { &self.nodes[id.0].value };
        Ok(match op {
            Op::Leaf => unreachable!("leaves are not evaluated"),
            Op::Affine { x, w, b } => {
                let (x, w) = (v(x), v(w));
                if x.cols() != w.rows() {
                    return Err(GraphError::ShapeMismatch {
                        op: "affine",
                        left: x.shape(),
                        right: w.shape(),
                    });
                }
                let (n, k) = (x.rows(), w.cols());
                let mut out = Tensor::zeros(n, k);
                if let Some(b) = b {
                    let b = v(b);
                    if b.shape() != (1, k) {
                        return Err(GraphError::ShapeMismatch {
                            op: "affine bias",
                            left: (1, k),
                            right: b.shape(),
                        });
                    }
                    for r in 0..n {
                        out.data_mut()[r * k..(r + 1) * k].copy_from_slice(b.data());
                    }
                }
                gemm(n, x.cols(), k, x.data(), false, w.data(), false, 1.0, out.data_mut());
                out
            }
            Op::Add(a, b) => {
                check_same("add", v(a), v(b))?;
                let mut out = v(a).clone();
                out.add_assign(v(b));
                out
            }
            Op::Mul(a, b) => {
                check_same("mul", v(a), v(b))?;
                let (a, b) = (v(a), v(b));
                let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
                Tensor::from_vec(a.rows(), a.cols(), data)
            }
            Op::Scale(a, c) => v(a).map(|x| x * c),
            Op::Relu(a) => v(a).map(|x| x.max(0.0)),
            Op::Tanh(a) => v(a).map(f64::tanh),
            Op::Sigmoid(a) => v(a).map(sigmoid),
            Op::Concat(parts) => {
                let rows = parts.first().map_or(0, |p| v(p).rows());
                for p in parts {
                    if v(p).rows() != rows {
                        return Err(GraphError::ShapeMismatch {
                            op: "concat",
                            left: v(&parts[0]).shape(),
                            right: v(p).shape(),
                        });
                    }
                }
                let cols: usize = parts.iter().map(|p| v(p).cols()).sum();
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for p in parts {
                        out.extend_from_slice(v(p).row(r));
                    }
                }
                Tensor::from_vec(rows, cols, out)
            }
            Op::Slice { x, start, len } => {
                let x = v(x);
                if start + len > x.cols() {
                    return Err(GraphError::ShapeMismatch {
                        op: "slice",
                        left: x.shape(),
                        right: (*start, *len),
                    });
                }
                let mut out = Vec::with_capacity(x.rows() * len);
                for r in 0..x.rows() {
                    out.extend_from_slice(&x.row(r)[*start..start + len]);
                }
                Tensor::from_vec(x.rows(), *len, out)
            }
            Op::Mean(a) => {
                let a = v(a);
                Tensor::scalar(a.data().iter().sum::<f64>() / a.len().max(1) as f64)
            }
            Op::SoftmaxCe { logits, targets } => {
                let z = v(logits);
                if targets.len() != z.rows() {
                    return Err(GraphError::ShapeMismatch {
                        op: "softmax_ce",
                        left: z.shape(),
                        right: (targets.len(), 1),
                    });
                }
                let mut total = 0.0;
                for (r, &t) in targets.iter().enumerate() {
                    if t >= z.cols() {
                        return Err(GraphError::TargetOutOfRange {
                            target: t,
                            classes: z.cols(),
                        });
                    }
                    let row = z.row(r);
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                    total += lse - row[t];
                }
                Tensor::scalar(total / z.rows().max(1) as f64)
            }
            Op::Normalize { x, scale, stride } => {
                let x = v(x);
                let w = x.cols();
                let out_cols = w.div_ceil(*stride);
                let mut out = Tensor::zeros(x.rows(), out_cols);
                for r in 0..x.rows() {
                    let row = x.row(r);
                    let first = row.first().copied().unwrap_or(0.0);
                    for (j, chunk) in row.chunks(*stride).enumerate() {
                        let m = chunk.iter().sum::<f64>() / chunk.len() as f64;
                        out.data_mut()[r * out_cols + j] = (m - first) / scale;
                    }
                }
                out
            }
            Op::Swa { deltas, book } => {
                let d = v(deltas);
                let (w, k) = (book.rows(), book.slots);
                if d.len() != w * k {
                    return Err(GraphError::ShapeMismatch {
                        op: "swa",
                        left: (w, k),
                        right: d.shape(),
                    });
                }
                let mut out = Vec::with_capacity(w);
                for i in 0..w {
                    let (num, den) = swa_parts(book, d.data(), i);
                    if den <= 0.0 {
                        return Err(GraphError::ZeroTotalSize { row: i });
                    }
                    out.push(num / den);
                }
                Tensor::row_vector(out)
            }
            Op::Linear { x, op } => {
                let x = v(x);
                if x.len() != op.input_len() {
                    return Err(GraphError::ShapeMismatch {
                        op: "linear",
                        left: (1, op.input_len()),
                        right: x.shape(),
                    });
                }
                let mut out = vec![0.0; op.output_len()];
                op.apply(x.data(), &mut out);
                Tensor::row_vector(out)
            }
        })
    }

    /// Re-evaluates every non-leaf node in tape order.
    pub fn forward(&mut self) -> Result<(), GraphError> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.eval(&self.nodes[i].op)?;
            self.nodes[i].value = Cow::Owned(value);
        }
        Ok(())
    }

    /// Reverse sweep from a scalar `loss`. Gradients reach every node on a
    /// path from a tracked leaf to the loss.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), GraphError> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(GraphError::NotScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let v = |id: &NodeId| -> &Tensor { &self.nodes[id.0].value };
        let wants = |id: &NodeId| self.nodes[id.0].requires_grad;
        let mut give = |id: NodeId, t: Tensor| match &mut grads[id.0] {
            Some(acc) => acc.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (xv, wv) = (v(x), v(w));
                let (n, d, k) = (xv.rows(), xv.cols(), wv.cols());
                if wants(x) {
                    let mut dx = Tensor::zeros(n, d);
                    gemm(n, k, d, g.data(), false, wv.data(), true, 0.0, dx.data_mut());
                    give(*x, dx);
                }
                if wants(w) {
                    let mut dw = Tensor::zeros(d, k);
                    gemm(d, n, k, xv.data(), true, g.data(), false, 0.0, dw.data_mut());
                    give(*w, dw);
                }
                if let Some(b) = b.filter(|b| wants(b)) {
                    let mut db = Tensor::zeros(1, k);
                    for r in 0..n {
                        for (a, x) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *a += x;
                        }
                    }
                    give(b, db);
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    give(*a, g.clone());
                }
                if wants(b) {
                    give(*b, g.clone());
                }
            }
            Op::Mul(a, b) => {
                let prod = |other: &Tensor| {
                    let data = g.data().iter().zip(other.data()).map(|(x, y)| x * y).collect();
                    Tensor::from_vec(g.rows(), g.cols(), data)
                };
                if wants(a) {
                    give(*a, prod(v(b)));
                }
                if wants(b) {
                    give(*b, prod(v(a)));
                }
            }
            Op::Scale(a, c) => give(*a, g.map(|x| x * c)),
            Op::Relu(a) | Op::Tanh(a) | Op::Sigmoid(a) => {
                let y = &node.value;
                let deriv: fn(f64) -> f64 = match node.op {
                    Op::Relu(_) => |y| if y > 0.0 { 1.0 } else { 0.0 },
                    Op::Tanh(_) => |y| 1.0 - y * y,
                    _ => |y| y * (1.0 - y),
                };
                let data = g.data().iter().zip(y.data()).map(|(g, &y)| g * deriv(y)).collect();
                give(*a, Tensor::from_vec(g.rows(), g.cols(), data));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let c = v(p).cols();
                    if wants(p) {
                        let mut out = Vec::with_capacity(g.rows() * c);
                        for r in 0..g.rows() {
                            out.extend_from_slice(&g.row(r)[offset..offset + c]);
                        }
                        give(*p, Tensor::from_vec(g.rows(), c, out));
                    }
                    offset += c;
                }
            }
            Op::Slice { x, start, len } => {
                let xv = v(x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                let cols = xv.cols();
                for r in 0..xv.rows() {
                    dx.data_mut()[r * cols + start..r * cols + start + len].copy_from_slice(g.row(r));
                }
                give(*x, dx);
            }
            Op::Mean(a) => {
                let av = v(a);
                let each = g.data()[0] / av.len().max(1) as f64;
                give(*a, Tensor::from_vec(av.rows(), av.cols(), vec![each; av.len()]));
            }
            Op::SoftmaxCe { logits, targets } => {
                let z = v(logits);
                let scale = g.data()[0] / z.rows().max(1) as f64;
                let mut dz = Tensor::zeros(z.rows(), z.cols());
                for (r, &t) in targets.iter().enumerate() {
                    let row = z.row(r);
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|x| (x - m).exp()).sum();
                    let out = &mut dz.data_mut()[r * z.cols()..(r + 1) * z.cols()];
                    for (c, o) in out.iter_mut().enumerate() {
                        let p = (row[c] - m).exp() / sum;
                        *o = scale * (p - if c == t { 1.0 } else { 0.0 });
                    }
                }
                give(*logits, dz);
            }
            Op::Normalize { x, scale, stride } => {
                let xv = v(x);
                let (rows, w) = xv.shape();
                let out_cols = g.cols();
                let mut dx = Tensor::zeros(rows, w);
                for r in 0..rows {
                    let gr = g.row(r);
                    let dr = &mut dx.data_mut()[r * w..(r + 1) * w];
                    let mut first = 0.0;
                    for j in 0..out_cols {
                        let lo = j * stride;
                        let hi = (lo + stride).min(w);
                        let each = gr[j] / (scale * (hi - lo) as f64);
                        for d in &mut dr[lo..hi] {
                            *d += each;
                        }
                        first += gr[j] / scale;
                    }
                    if w > 0 {
                        dr[0] -= first;
                    }
                }
                give(*x, dx);
            }
            Op::Swa { deltas, book } => {
                let d = v(deltas);
                let k = book.slots;
                let y = node.value.data();
                let mut dd = Tensor::zeros(d.rows(), d.cols());
                for i in 0..book.rows() {
                    let (_, den) = swa_parts(book, d.data(), i);
                    let gi = g.data()[i] / den;
                    let prices = &book.prices[i * k..(i + 1) * k];
                    let out = &mut dd.data_mut()[i * k..(i + 1) * k];
                    for (o, p) in out.iter_mut().zip(prices) {
                        *o = gi * (p.dollars() - y[i]);
                    }
                }
                give(*deltas, dd);
            }
            Op::Linear { x, op } => {
                let mut dx = vec![0.0; op.input_len()];
                op.apply_adjoint(g.data(), &mut dx);
                let xv = v(x);
                give(*x, Tensor::from_vec(xv.rows(), xv.cols(), dx));
            }
        }
    }
}

/// Numerator and denominator of the perturbed SWA at row `i`.
fn swa_parts(book: &BookInput<'_>, deltas: &[f64], i: usize) -> (f64, f64) {
    let k = book.slots;
    let (mut num, mut den) = (0.0, 0.0);
    for j in i * k..(i + 1) * k {
        let s = book.sizes[j] as f64 + deltas[j];
        num += book.prices[j].dollars() * s;
        den += s;
    }
    (num, den)
}

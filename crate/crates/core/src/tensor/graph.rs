use super::kernels::{matmul_acc, matmul_nt_acc, matmul_tn_acc, split_axis, transpose_last2};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`]. Only meaningful for the graph that
/// produced it, and only until that graph is cleared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Supported operations and their attributes.
///
/// Shape rules:
/// - `MatMul`: `[.., m, k] · [k, n]` (leading axes flattened) or batched
///   `[b, m, k] · [b, k, n]`.
/// - `Add`: identical shapes, or the second operand's shape is a trailing
///   suffix of the first (bias broadcast). No other broadcasting exists.
/// - `Sub`, `Mul`, `AbsErrorLoss`, `SqErrorLoss`: identical shapes.
/// - `Concat`/`Slice`/`Softmax`/`LayerNorm`: `axis < rank`.
/// - `LayerNorm` takes `[x, gamma, beta]` with `gamma`, `beta` of length
///   `shape[axis]`.
/// - `Transpose` swaps the last two axes (rank ≥ 2).
/// - `Mean`, `Sum` and both losses reduce to a rank-0 scalar.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Reshape(Vec<usize>),
    Transpose,
    Tanh,
    Sigmoid,
    Relu,
    Gelu,
    Softmax { axis: usize },
    LayerNorm { axis: usize, eps: f64 },
    Mean,
    Sum,
    AbsErrorLoss,
    SqErrorLoss,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "subtract",
            OpKind::Mul => "multiply",
            OpKind::Scale(_) => "scale",
            OpKind::Concat { .. } => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::Reshape(_) => "reshape",
            OpKind::Transpose => "transpose",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Relu => "relu",
            OpKind::Gelu => "gelu",
            OpKind::Softmax { .. } => "softmax",
            OpKind::LayerNorm { .. } => "layer_norm",
            OpKind::Mean => "mean",
            OpKind::Sum => "sum",
            OpKind::AbsErrorLoss => "abs_error_loss",
            OpKind::SqErrorLoss => "sq_error_loss",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    // None for leaves and for nodes that do not need gradients.
    kind: Option<OpKind>,
    inputs: Vec<Var>,
    requires_grad: bool,
    saved: Vec<T>,
}

/// Tape of operations for one forward/backward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    bindings: Vec<(usize, Var)>,
    consumed: bool,
    live_bytes: usize,
    peak_bytes: usize,
    work: u64,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            bindings: Vec::new(),
            consumed: false,
            live_bytes: 0,
            peak_bytes: 0,
            work: 0,
        }
    }

    /// Drops every recorded node, gradient and binding. The work counter
    /// and peak-memory high-water mark survive so they can be read per run.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.bindings.clear();
        self.consumed = false;
        self.live_bytes = 0;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// High-water mark of bytes held by node values, saved context and
    /// gradient buffers.
    pub fn peak_bytes(&self) -> usize {
        self.peak_bytes
    }

    pub fn reset_peak(&mut self) {
        self.peak_bytes = self.live_bytes;
    }

    /// Approximate floating-point operation count since construction.
    pub fn work(&self) -> u64 {
        self.work
    }

    pub fn add_work(&mut self, w: u64) {
        self.work += w;
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Parameter bindings recorded by [`Graph::parameter`], in insertion order.
    pub fn bindings(&self) -> &[(usize, Var)] {
        &self.bindings
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var> {
        self.leaf(t, false)
    }

    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Result<Var> {
        self.push("leaf", t, None, Vec::new(), Vec::new(), requires_grad)
    }

    /// Inserts a trainable leaf and remembers which parameter it stands for.
    pub fn parameter(&mut self, param_id: usize, t: Tensor<T>) -> Result<Var> {
        let v = self.leaf(t, true)?;
        self.bindings.push((param_id, v));
        Ok(v)
    }

    fn push(
        &mut self,
        op: &'static str,
        value: Tensor<T>,
        kind: Option<OpKind>,
        inputs: Vec<Var>,
        saved: Vec<T>,
        leaf_grad: bool,
    ) -> Result<Var> {
        if self.consumed {
            return Err(Error::StaleGraph);
        }
        if !value.is_finite() {
            return Err(Error::Numeric { op });
        }
        let requires_grad = if kind.is_some() {
            inputs.iter().any(|v| self.nodes[v.0].requires_grad)
        } else {
            leaf_grad
        };
        let (kind, saved) = if requires_grad {
            (kind, saved)
        } else {
            (None, Vec::new())
        };
        self.live_bytes += value.bytes() + saved.len() * T::BYTES;
        self.peak_bytes = self.peak_bytes.max(self.live_bytes);
        self.work += value.len() as u64;
        self.nodes.push(Node {
            value,
            kind,
            inputs,
            requires_grad,
            saved,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn check_live(&self, inputs: &[Var]) -> Result<()> {
        for v in inputs {
            if v.0 >= self.nodes.len() {
                return Err(Error::Contract(format!(
                    "variable {} does not belong to this graph",
                    v.0
                )));
            }
        }
        Ok(())
    }

    /// Applies `kind` to `inputs`, recording the node for backward when any
    /// input requires gradients.
    pub fn apply_op(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        if self.consumed {
            return Err(Error::StaleGraph);
        }
        self.check_live(inputs)?;
        let op = kind.name();
        let arity = match kind {
            OpKind::Concat { .. } => None,
            OpKind::LayerNorm { .. } => Some(3),
            OpKind::MatMul
            | OpKind::Add
            | OpKind::Sub
            | OpKind::Mul
            | OpKind::AbsErrorLoss
            | OpKind::SqErrorLoss => Some(2),
            _ => Some(1),
        };
        match arity {
            Some(n) if n != inputs.len() => {
                return Err(Error::shape(
                    op,
                    format!("expected {} inputs, got {}", n, inputs.len()),
                ))
            }
            None if inputs.is_empty() => return Err(Error::shape(op, "no inputs")),
            _ => {}
        }
        let (value, saved) = self.forward(&kind, inputs)?;
        self.push(op, value, Some(kind), inputs.to_vec(), saved, false)
    }

    fn forward(&mut self, kind: &OpKind, inputs: &[Var]) -> Result<(Tensor<T>, Vec<T>)> {
        let op = kind.name();
        let x = &self.nodes[inputs[0].0].value;
        let out = match kind {
            OpKind::MatMul => {
                let b = &self.nodes[inputs[1].0].value;
                let (shape, dims) = matmul_dims(x.shape(), b.shape())?;
                let mut out = vec![T::zero(); shape.iter().product()];
                match dims {
                    MatDims::Flat { m, k, n } => {
                        matmul_acc(x.data(), b.data(), &mut out, m, k, n);
                        self.work += 2 * (m * k * n) as u64;
                    }
                    MatDims::Batched { b: nb, m, k, n } => {
                        for i in 0..nb {
                            matmul_acc(
                                &x.data()[i * m * k..(i + 1) * m * k],
                                &b.data()[i * k * n..(i + 1) * k * n],
                                &mut out[i * m * n..(i + 1) * m * n],
                                m,
                                k,
                                n,
                            );
                        }
                        self.work += 2 * (nb * m * k * n) as u64;
                    }
                }
                (Tensor::new(shape, out)?, Vec::new())
            }
            OpKind::Add => {
                let b = &self.nodes[inputs[1].0].value;
                if x.shape() == b.shape() {
                    let d = x.data().iter().zip(b.data()).map(|(&p, &q)| p + q).collect();
                    (Tensor::new(x.shape().to_vec(), d)?, Vec::new())
                } else if is_suffix(b.shape(), x.shape()) && !b.is_empty() {
                    let inner = b.len();
                    let d = x
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| p + b.data()[i % inner])
                        .collect();
                    (Tensor::new(x.shape().to_vec(), d)?, Vec::new())
                } else {
                    return Err(Error::shape(
                        op,
                        format!("{:?} + {:?}", x.shape(), b.shape()),
                    ));
                }
            }
            OpKind::Sub | OpKind::Mul => {
                let b = &self.nodes[inputs[1].0].value;
                same_shape(op, x.shape(), b.shape())?;
                let d = if matches!(kind, OpKind::Sub) {
                    x.data().iter().zip(b.data()).map(|(&p, &q)| p - q).collect()
                } else {
                    x.data().iter().zip(b.data()).map(|(&p, &q)| p * q).collect()
                };
                (Tensor::new(x.shape().to_vec(), d)?, Vec::new())
            }
            OpKind::Scale(c) => {
                let c = T::of(*c);
                let d = x.data().iter().map(|&v| v * c).collect();
                (Tensor::new(x.shape().to_vec(), d)?, Vec::new())
            }
            OpKind::Concat { axis } => {
                let axis = *axis;
                let first = x.shape().to_vec();
                check_axis(op, &first, axis)?;
                let mut total = 0;
                for v in inputs {
                    let s = self.nodes[v.0].value.shape();
                    let compatible = s.len() == first.len()
                        && s.iter()
                            .zip(&first)
                            .enumerate()
                            .all(|(i, (a, b))| i == axis || a == b);
                    if !compatible {
                        return Err(Error::shape(
                            op,
                            format!("{:?} vs {:?} along axis {}", first, s, axis),
                        ));
                    }
                    total += s[axis];
                }
                let mut shape = first.clone();
                shape[axis] = total;
                let (outer, _, inner) = split_axis(&shape, axis);
                let mut out = Vec::with_capacity(shape.iter().product());
                for o in 0..outer {
                    for v in inputs {
                        let t = &self.nodes[v.0].value;
                        let chunk = t.shape()[axis] * inner;
                        out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
                    }
                }
                (Tensor::new(shape, out)?, Vec::new())
            }
            OpKind::Slice { axis, start, len } => {
                check_axis(op, x.shape(), *axis)?;
                let dim = x.shape()[*axis];
                if *len == 0 || start + len > dim {
                    return Err(Error::shape(
                        op,
                        format!("[{}, {}) out of range for axis of {}", start, start + len, dim),
                    ));
                }
                let (outer, _, inner) = split_axis(x.shape(), *axis);
                let mut out = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let base = o * dim * inner + start * inner;
                    out.extend_from_slice(&x.data()[base..base + len * inner]);
                }
                let mut shape = x.shape().to_vec();
                shape[*axis] = *len;
                (Tensor::new(shape, out)?, Vec::new())
            }
            OpKind::Reshape(shape) => {
                let n: usize = shape.iter().product();
                if n != x.len() {
                    return Err(Error::shape(
                        op,
                        format!("{:?} -> {:?}", x.shape(), shape),
                    ));
                }
                (Tensor::new(shape.clone(), x.data().to_vec())?, Vec::new())
            }
            OpKind::Transpose => {
                let r = x.rank();
                if r < 2 {
                    return Err(Error::shape(op, format!("rank {} < 2", r)));
                }
                let (rows, cols) = (x.shape()[r - 2], x.shape()[r - 1]);
                let batch = x.len() / (rows * cols).max(1);
                let d = transpose_last2(x.data(), batch, rows, cols);
                let mut shape = x.shape().to_vec();
                shape.swap(r - 2, r - 1);
                (Tensor::new(shape, d)?, Vec::new())
            }
            OpKind::Tanh => unary(x, |v| v.tanh()),
            OpKind::Sigmoid => unary(x, sigmoid),
            OpKind::Relu => unary(x, |v| if v > T::zero() { v } else { T::zero() }),
            OpKind::Gelu => {
                self.work += 8 * x.len() as u64;
                unary(x, gelu)
            }
            OpKind::Softmax { axis } => {
                check_axis(op, x.shape(), *axis)?;
                let (outer, n, inner) = split_axis(x.shape(), *axis);
                let mut out = x.data().to_vec();
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| o * n * inner + j * inner + i;
                        let mut mx = T::neg_infinity();
                        for j in 0..n {
                            mx = mx.max(out[idx(j)]);
                        }
                        let mut s = T::zero();
                        for j in 0..n {
                            let e = (out[idx(j)] - mx).exp();
                            out[idx(j)] = e;
                            s = s + e;
                        }
                        for j in 0..n {
                            out[idx(j)] = out[idx(j)] / s;
                        }
                    }
                }
                self.work += 4 * x.len() as u64;
                (Tensor::new(x.shape().to_vec(), out)?, Vec::new())
            }
            OpKind::LayerNorm { axis, eps } => {
                check_axis(op, x.shape(), *axis)?;
                let gamma = &self.nodes[inputs[1].0].value;
                let beta = &self.nodes[inputs[2].0].value;
                let n = x.shape()[*axis];
                if gamma.len() != n || beta.len() != n {
                    return Err(Error::shape(
                        op,
                        format!(
                            "gamma {:?} / beta {:?} vs normalized axis of {}",
                            gamma.shape(),
                            beta.shape(),
                            n
                        ),
                    ));
                }
                let (outer, _, inner) = split_axis(x.shape(), *axis);
                let eps = T::of(*eps);
                let nf = T::of(n as f64);
                let mut out = vec![T::zero(); x.len()];
                // saved: xhat (len x.len()) followed by inv_std (outer*inner)
                let mut saved = vec![T::zero(); x.len() + outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| o * n * inner + j * inner + i;
                        let mut mean = T::zero();
                        for j in 0..n {
                            mean = mean + x.data()[idx(j)];
                        }
                        mean = mean / nf;
                        let mut var = T::zero();
                        for j in 0..n {
                            let d = x.data()[idx(j)] - mean;
                            var = var + d * d;
                        }
                        var = var / nf;
                        let inv = T::one() / (var + eps).sqrt();
                        for j in 0..n {
                            let xh = (x.data()[idx(j)] - mean) * inv;
                            saved[idx(j)] = xh;
                            out[idx(j)] = xh * gamma.data()[j] + beta.data()[j];
                        }
                        saved[x.len() + o * inner + i] = inv;
                    }
                }
                self.work += 8 * x.len() as u64;
                (Tensor::new(x.shape().to_vec(), out)?, saved)
            }
            OpKind::Mean => {
                let s: T = x.data().iter().copied().sum();
                (Tensor::scalar(s / T::of(x.len() as f64)), Vec::new())
            }
            OpKind::Sum => (Tensor::scalar(x.data().iter().copied().sum()), Vec::new()),
            OpKind::AbsErrorLoss | OpKind::SqErrorLoss => {
                let b = &self.nodes[inputs[1].0].value;
                same_shape(op, x.shape(), b.shape())?;
                if x.is_empty() {
                    return Err(Error::shape(op, "empty operands"));
                }
                let abs = matches!(kind, OpKind::AbsErrorLoss);
                let s: T = x
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(&p, &q)| {
                        let d = p - q;
                        if abs {
                            d.abs()
                        } else {
                            d * d
                        }
                    })
                    .sum();
                (Tensor::scalar(s / T::of(x.len() as f64)), Vec::new())
            }
        };
        Ok(out)
    }

    /// Propagates d(loss)/d(node) to every node that requires gradients.
    /// A graph can be differentiated once; a second call without a fresh
    /// forward pass is a [`Error::StaleGraph`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::StaleGraph);
        }
        self.check_live(&[loss])?;
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.nodes[loss.0].value.shape()),
            ));
        }
        self.consumed = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        self.live_bytes += T::BYTES;

        for idx in (0..=loss.0).rev() {
            let go = match self.grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            if self.nodes[idx].kind.is_some() {
                let contributions = self.backward_node(idx, &go);
                for (input, g) in contributions {
                    self.accumulate(input, g);
                }
            }
            self.grads[idx] = Some(go);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
            slot @ None => {
                self.live_bytes += g.len() * T::BYTES;
                self.peak_bytes = self.peak_bytes.max(self.live_bytes);
                *slot = Some(g);
            }
        }
    }

    fn backward_node(&mut self, idx: usize, go: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[idx];
        let kind = node.kind.as_ref().expect("op node");
        let inputs = &node.inputs;
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| &self.nodes[v.0].value;
        let y = node.value.data();
        let mut out = Vec::new();
        let mut work = go.len() as u64;

        match kind {
            OpKind::MatMul => {
                let (a, b) = (val(inputs[0]), val(inputs[1]));
                let (_, dims) = matmul_dims(a.shape(), b.shape()).expect("validated in forward");
                let (mut da, mut db) = (
                    rg(inputs[0]).then(|| vec![T::zero(); a.len()]),
                    rg(inputs[1]).then(|| vec![T::zero(); b.len()]),
                );
                match dims {
                    MatDims::Flat { m, k, n } => {
                        if let Some(da) = da.as_mut() {
                            matmul_nt_acc(go, b.data(), da, m, k, n);
                        }
                        if let Some(db) = db.as_mut() {
                            matmul_tn_acc(a.data(), go, db, m, k, n);
                        }
                        work += 4 * (m * k * n) as u64;
                    }
                    MatDims::Batched { b: nb, m, k, n } => {
                        for i in 0..nb {
                            let g = &go[i * m * n..(i + 1) * m * n];
                            if let Some(da) = da.as_mut() {
                                matmul_nt_acc(
                                    g,
                                    &b.data()[i * k * n..(i + 1) * k * n],
                                    &mut da[i * m * k..(i + 1) * m * k],
                                    m,
                                    k,
                                    n,
                                );
                            }
                            if let Some(db) = db.as_mut() {
                                matmul_tn_acc(
                                    &a.data()[i * m * k..(i + 1) * m * k],
                                    g,
                                    &mut db[i * k * n..(i + 1) * k * n],
                                    m,
                                    k,
                                    n,
                                );
                            }
                        }
                        work += 4 * (nb * m * k * n) as u64;
                    }
                }
                if let Some(da) = da {
                    out.push((inputs[0], da));
                }
                if let Some(db) = db {
                    out.push((inputs[1], db));
                }
            }
            OpKind::Add => {
                if rg(inputs[0]) {
                    out.push((inputs[0], go.to_vec()));
                }
                if rg(inputs[1]) {
                    let b = val(inputs[1]);
                    if b.len() == go.len() {
                        out.push((inputs[1], go.to_vec()));
                    } else {
                        let inner = b.len();
                        let mut db = vec![T::zero(); inner];
                        for (i, &g) in go.iter().enumerate() {
                            db[i % inner] = db[i % inner] + g;
                        }
                        out.push((inputs[1], db));
                    }
                }
            }
            OpKind::Sub => {
                if rg(inputs[0]) {
                    out.push((inputs[0], go.to_vec()));
                }
                if rg(inputs[1]) {
                    out.push((inputs[1], go.iter().map(|&g| -g).collect()));
                }
            }
            OpKind::Mul => {
                let (a, b) = (val(inputs[0]), val(inputs[1]));
                if rg(inputs[0]) {
                    out.push((inputs[0], go.iter().zip(b.data()).map(|(&g, &q)| g * q).collect()));
                }
                if rg(inputs[1]) {
                    out.push((inputs[1], go.iter().zip(a.data()).map(|(&g, &p)| g * p).collect()));
                }
            }
            OpKind::Scale(c) => {
                let c = T::of(*c);
                out.push((inputs[0], go.iter().map(|&g| g * c).collect()));
            }
            OpKind::Concat { axis } => {
                let shape = node.value.shape();
                let (outer, _, inner) = split_axis(shape, *axis);
                let total = shape[*axis];
                let mut offset = 0;
                for &v in inputs {
                    let len = val(v).shape()[*axis];
                    if rg(v) {
                        let mut g = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = o * total * inner + offset * inner;
                            g.extend_from_slice(&go[base..base + len * inner]);
                        }
                        out.push((v, g));
                    }
                    offset += len;
                }
            }
            OpKind::Slice { axis, start, len } => {
                let x = val(inputs[0]);
                let dim = x.shape()[*axis];
                let (outer, _, inner) = split_axis(x.shape(), *axis);
                let mut g = vec![T::zero(); x.len()];
                for o in 0..outer {
                    let dst = o * dim * inner + start * inner;
                    let src = o * len * inner;
                    g[dst..dst + len * inner].copy_from_slice(&go[src..src + len * inner]);
                }
                out.push((inputs[0], g));
            }
            OpKind::Reshape(_) => out.push((inputs[0], go.to_vec())),
            OpKind::Transpose => {
                // output is [.., c, r]; transposing back yields [.., r, c]
                let s = node.value.shape();
                let r = s.len();
                let (rows, cols) = (s[r - 2], s[r - 1]);
                let batch = go.len() / (rows * cols).max(1);
                out.push((inputs[0], transpose_last2(go, batch, rows, cols)));
            }
            OpKind::Tanh => out.push((
                inputs[0],
                go.iter().zip(y).map(|(&g, &t)| g * (T::one() - t * t)).collect(),
            )),
            OpKind::Sigmoid => out.push((
                inputs[0],
                go.iter().zip(y).map(|(&g, &s)| g * s * (T::one() - s)).collect(),
            )),
            OpKind::Relu => {
                let x = val(inputs[0]);
                out.push((
                    inputs[0],
                    go.iter()
                        .zip(x.data())
                        .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                        .collect(),
                ));
            }
            OpKind::Gelu => {
                let x = val(inputs[0]);
                work += 10 * go.len() as u64;
                out.push((
                    inputs[0],
                    go.iter().zip(x.data()).map(|(&g, &v)| g * gelu_grad(v)).collect(),
                ));
            }
            OpKind::Softmax { axis } => {
                let (outer, n, inner) = split_axis(node.value.shape(), *axis);
                let mut g = vec![T::zero(); go.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| o * n * inner + j * inner + i;
                        let mut dot = T::zero();
                        for j in 0..n {
                            dot = dot + go[idx(j)] * y[idx(j)];
                        }
                        for j in 0..n {
                            g[idx(j)] = y[idx(j)] * (go[idx(j)] - dot);
                        }
                    }
                }
                work += 4 * go.len() as u64;
                out.push((inputs[0], g));
            }
            OpKind::LayerNorm { axis, .. } => {
                let x = val(inputs[0]);
                let gamma = val(inputs[1]).data();
                let (outer, n, inner) = split_axis(x.shape(), *axis);
                let xhat = &node.saved[..x.len()];
                let inv = &node.saved[x.len()..];
                let nf = T::of(n as f64);
                let mut dx = vec![T::zero(); x.len()];
                let mut dgamma = vec![T::zero(); n];
                let mut dbeta = vec![T::zero(); n];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| o * n * inner + j * inner + i;
                        let mut sum_d = T::zero();
                        let mut sum_dx = T::zero();
                        for j in 0..n {
                            let gj = go[idx(j)];
                            dgamma[j] = dgamma[j] + gj * xhat[idx(j)];
                            dbeta[j] = dbeta[j] + gj;
                            let d = gj * gamma[j];
                            sum_d = sum_d + d;
                            sum_dx = sum_dx + d * xhat[idx(j)];
                        }
                        let s = inv[o * inner + i] / nf;
                        for j in 0..n {
                            let d = go[idx(j)] * gamma[j];
                            dx[idx(j)] = s * (nf * d - sum_d - xhat[idx(j)] * sum_dx);
                        }
                    }
                }
                work += 10 * go.len() as u64;
                if rg(inputs[0]) {
                    out.push((inputs[0], dx));
                }
                if rg(inputs[1]) {
                    out.push((inputs[1], dgamma));
                }
                if rg(inputs[2]) {
                    out.push((inputs[2], dbeta));
                }
            }
            OpKind::Mean => {
                let n = val(inputs[0]).len();
                let g = go[0] / T::of(n as f64);
                work += n as u64;
                out.push((inputs[0], vec![g; n]));
            }
            OpKind::Sum => {
                let n = val(inputs[0]).len();
                work += n as u64;
                out.push((inputs[0], vec![go[0]; n]));
            }
            OpKind::AbsErrorLoss | OpKind::SqErrorLoss => {
                let (p, t) = (val(inputs[0]), val(inputs[1]));
                let scale = go[0] / T::of(p.len() as f64);
                let abs = matches!(kind, OpKind::AbsErrorLoss);
                let two = T::of(2.0);
                // subgradient of |d| at d = 0 is taken as 0
                let gp: Vec<T> = p
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(&a, &b)| {
                        let d = a - b;
                        if abs {
                            if d > T::zero() {
                                scale
                            } else if d < T::zero() {
                                -scale
                            } else {
                                T::zero()
                            }
                        } else {
                            two * d * scale
                        }
                    })
                    .collect();
                work += 3 * p.len() as u64;
                if rg(inputs[1]) {
                    out.push((inputs[1], gp.iter().map(|&g| -g).collect()));
                }
                if rg(inputs[0]) {
                    out.push((inputs[0], gp));
                }
            }
        }
        self.work += work;
        out
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_op(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_op(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_op(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_op(OpKind::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply_op(OpKind::Scale(c), &[a])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.apply_op(OpKind::Concat { axis }, xs)
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.apply_op(OpKind::Slice { axis, start, len }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        self.apply_op(OpKind::Reshape(shape), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.apply_op(OpKind::Transpose, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.apply_op(OpKind::Tanh, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.apply_op(OpKind::Sigmoid, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.apply_op(OpKind::Relu, &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.apply_op(OpKind::Gelu, &[x])
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply_op(OpKind::Softmax { axis }, &[x])
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, axis: usize, eps: f64) -> Result<Var> {
        self.apply_op(OpKind::LayerNorm { axis, eps }, &[x, gamma, beta])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.apply_op(OpKind::Mean, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.apply_op(OpKind::Sum, &[x])
    }

    pub fn abs_error_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.apply_op(OpKind::AbsErrorLoss, &[pred, target])
    }

    pub fn sq_error_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.apply_op(OpKind::SqErrorLoss, &[pred, target])
    }
}

enum MatDims {
    Flat { m: usize, k: usize, n: usize },
    Batched { b: usize, m: usize, k: usize, n: usize },
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(Vec<usize>, MatDims)> {
    let err = || Error::shape("matmul", format!("{:?} x {:?}", a, b));
    if a.len() < 2 || b.len() < 2 {
        return Err(err());
    }
    if b.len() == 2 {
        let (k, n) = (b[0], b[1]);
        if a[a.len() - 1] != k {
            return Err(err());
        }
        let m = a[..a.len() - 1].iter().product();
        let mut shape = a[..a.len() - 1].to_vec();
        shape.push(n);
        return Ok((shape, MatDims::Flat { m, k, n }));
    }
    if a.len() == 3 && b.len() == 3 && a[0] == b[0] && a[2] == b[1] {
        let (nb, m, k, n) = (a[0], a[1], a[2], b[2]);
        return Ok((vec![nb, m, n], MatDims::Batched { b: nb, m, k, n }));
    }
    Err(err())
}

fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() < long.len() && long[long.len() - short.len()..] == *short
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a, b)));
    }
    Ok(())
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::shape(
            op,
            format!("axis {} out of range for {:?}", axis, shape),
        ));
    }
    Ok(())
}

fn unary<T: Real>(x: &Tensor<T>, f: impl Fn(T) -> T) -> (Tensor<T>, Vec<T>) {
    let d = x.data().iter().map(|&v| f(v)).collect();
    (
        Tensor::new(x.shape().to_vec(), d).expect("same shape"),
        Vec::new(),
    )
}

fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

// tanh approximation of GELU
fn gelu<T: Real>(v: T) -> T {
    let c = T::of(SQRT_2_OVER_PI);
    let inner = c * (v + T::of(GELU_C) * v * v * v);
    T::of(0.5) * v * (T::one() + inner.tanh())
}

fn gelu_grad<T: Real>(v: T) -> T {
    let c = T::of(SQRT_2_OVER_PI);
    let a = T::of(GELU_C);
    let inner = c * (v + a * v * v * v);
    let t = inner.tanh();
    let dinner = c * (T::one() + T::of(3.0) * a * v * v);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * v * (T::one() - t * t) * dinner
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, d: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, d).unwrap()
    }

    #[test]
    fn matmul_shape_rule() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(vec![2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(vec![3, 4])).unwrap();
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.shape(c), &[2, 4]);
    }

    #[test]
    fn matmul_mismatch_names_operation_and_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(vec![2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(vec![4, 4])).unwrap();
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]") && err.contains("[4, 4]"), "{err}");
    }

    #[test]
    fn activation_identity_points() {
        let mut g = Graph::<f64>::new();
        let z = g.constant(Tensor::scalar(0.0)).unwrap();
        let th = g.tanh(z).unwrap();
        let sg = g.sigmoid(z).unwrap();
        assert_eq!(g.value(th).item().unwrap(), 0.0);
        assert_eq!(g.value(sg).item().unwrap(), 0.5);
    }

    #[test]
    fn softmax_uniform() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(vec![4], 1.0)).unwrap();
        let s = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(s).data(), &[0.25; 4]);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::scalar(3.0), true).unwrap();
        let l = g.mul(w, w).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[6.0]);
    }

    #[test]
    fn abs_loss_tie_has_zero_subgradient() {
        let mut g = Graph::<f64>::new();
        let p = g.leaf(t(vec![3], &[1.0, 2.0, 3.0]), true).unwrap();
        let y = g.constant(t(vec![3], &[1.0, 2.0, 3.0])).unwrap();
        let l = g.abs_error_loss(p, y).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 0.0);
        g.backward(l).unwrap();
        assert_eq!(g.grad(p).unwrap(), &[0.0; 3]);
    }

    #[test]
    fn second_backward_is_stale() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::scalar(2.0), true).unwrap();
        let l = g.mul(w, w).unwrap();
        g.backward(l).unwrap();
        assert!(matches!(g.backward(l), Err(Error::StaleGraph)));
        assert!(matches!(g.tanh(w), Err(Error::StaleGraph)));
        g.clear();
        let w = g.leaf(Tensor::scalar(2.0), true).unwrap();
        let l = g.mul(w, w).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[4.0]);
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::<f64>::new();
        assert!(matches!(
            g.constant(Tensor::scalar(f64::NAN)),
            Err(Error::Numeric { .. })
        ));
        let x = g.constant(Tensor::scalar(1e300)).unwrap();
        assert!(matches!(g.mul(x, x), Err(Error::Numeric { op: "multiply" })));
    }

    #[test]
    fn bias_broadcast_only_on_trailing_dims() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(vec![2, 3], &[1., 2., 3., 4., 5., 6.]), true).unwrap();
        let b = g.leaf(t(vec![3], &[10., 20., 30.]), true).unwrap();
        let y = g.add(x, b).unwrap();
        assert_eq!(g.value(y).data(), &[11., 22., 33., 14., 25., 36.]);
        let bad = g.constant(Tensor::zeros(vec![2])).unwrap();
        assert!(g.add(x, bad).is_err());
        assert!(g.mul(x, b).is_err());
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).unwrap(), &[2., 2., 2.]);
    }

    #[test]
    fn concat_then_slice_roundtrip() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(t(vec![2, 2], &[1., 2., 3., 4.])).unwrap();
        let b = g.constant(t(vec![2, 1], &[5., 6.])).unwrap();
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(c).data(), &[1., 2., 5., 3., 4., 6.]);
        let s = g.slice(c, 1, 2, 1).unwrap();
        assert_eq!(g.value(s).data(), &[5., 6.]);
        assert!(g.slice(c, 1, 2, 2).is_err());
    }

    #[test]
    fn layer_norm_normalizes() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(vec![1, 4], &[1., 2., 3., 4.])).unwrap();
        let gm = g.constant(Tensor::full(vec![4], 1.0)).unwrap();
        let bt = g.constant(Tensor::zeros(vec![4])).unwrap();
        let y = g.layer_norm(x, gm, bt, 1, 1e-5).unwrap();
        let v = g.value(y).data();
        let mean: f64 = v.iter().sum::<f64>() / 4.0;
        let var: f64 = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn peak_bytes_tracks_live_nodes() {
        let mut g = Graph::<f32>::new();
        let _ = g.constant(Tensor::zeros(vec![10])).unwrap();
        assert_eq!(g.peak_bytes(), 40);
        g.clear();
        g.reset_peak();
        assert_eq!(g.peak_bytes(), 0);
    }
}

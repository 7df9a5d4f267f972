//! Dense row-major tensors and a reverse-mode tape.
//!
//! Every operation appends a node to a [`Tape`] holding its forward value.
//! Nodes whose inputs all have `requires_grad == false` are recorded as
//! constants and skipped during [`Tape::backward`]. Backward rules are
//! written per high-level op (matmul, softmax, layer norm, ...) instead of
//! per scalar, so the graph for a full transformer stays a few hundred
//! nodes long.

use crate::error::{Error, Result};

/// Dense n-dimensional array of `f64` values with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Config(format!("tensor extents must be positive, got {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(&[1, 1], value)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(m * n);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::shape("from_rows", &[n], &[r.len()]));
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![m, n], data)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.cols();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.data.len());
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
    }

    fn matrix_dims(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [m, n] => Ok((*m, *n)),
            other => Err(Error::shape(op, other, &[0, 0])),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Elementwise {
        kind: ElementwiseKind,
        lhs: Var,
        rhs: Var,
        broadcast: bool,
    },
    Scale(Var, f64),
    Transpose(Var),
    Softmax {
        input: Var,
    },
    LayerNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    ConcatCols(Vec<Var>),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        ignore: usize,
        probs: Vec<f64>,
        count: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of operations. Inputs always precede their consumers.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a leaf. Its `requires_grad` flag decides whether gradients flow to it.
    pub fn leaf(&mut self, mut value: Tensor) -> Var {
        let requires_grad = value.requires_grad;
        value.grad = None;
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, mut value: Tensor) -> Var {
        value.requires_grad = false;
        self.leaf(value)
    }

    fn push(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> Var {
        value.requires_grad = requires_grad;
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.matrix_dims("matmul")?;
        let (k2, n) = bv.matrix_dims("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let out = matmul_raw(av.data(), bv.data(), m, k, n);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Elementwise op. `b` may be a `1 x n` row broadcast over every row of `a`.
    pub fn elementwise(&mut self, a: Var, b: Var, kind: ElementwiseKind) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let broadcast = if av.shape() == bv.shape() {
            false
        } else if av.shape().len() == 2
            && bv.shape().len() == 2
            && bv.shape()[0] == 1
            && bv.shape()[1] == av.shape()[1]
        {
            true
        } else {
            return Err(Error::shape("elementwise", av.shape(), bv.shape()));
        };
        let n = bv.numel();
        let f = match kind {
            ElementwiseKind::Add => |x: f64, y: f64| x + y,
            ElementwiseKind::Sub => |x: f64, y: f64| x - y,
            ElementwiseKind::Mul => |x: f64, y: f64| x * y,
        };
        let out: Vec<f64> = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv.data()[if broadcast { i % n } else { i }]))
            .collect();
        let shape = av.shape().to_vec();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Elementwise {
                kind,
                lhs: a,
                rhs: b,
                broadcast,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseKind::Mul)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = self.value(x);
        let out: Vec<f64> = v.data().iter().map(|a| a * factor).collect();
        let t = Tensor::new(v.shape().to_vec(), out).expect("same shape");
        let rg = self.any_grad(&[x]);
        self.push(t, Op::Scale(x, factor), rg)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let (m, n) = v.matrix_dims("transpose")?;
        let out = transpose_raw(v.data(), m, n);
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(x), rg))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, false)
    }

    /// Row-wise softmax where row `i` only sees columns `j <= i`; masked
    /// entries are exactly zero.
    pub fn causal_softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, true)
    }

    fn softmax_impl(&mut self, x: Var, causal: bool) -> Result<Var> {
        let v = self.value(x);
        let (m, n) = v.matrix_dims("softmax_rows")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let visible = if causal { (i + 1).min(n) } else { n };
            softmax_into(&v.data()[i * n..i * n + visible], &mut out[i * n..i * n + visible]);
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Softmax { input: x }, rg))
    }

    /// Per-row layer normalisation with learned `1 x n` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let v = self.value(x);
        let (m, n) = v.matrix_dims("layer_norm")?;
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.shape() != [1, n] || b.shape() != [1, n] {
            return Err(Error::shape("layer_norm", v.shape(), g.shape()));
        }
        let mut normalized = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &v.data()[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + eps).sqrt();
            inv_std[i] = r;
            for j in 0..n {
                let xh = (row[j] - mean) * r;
                normalized[i * n + j] = xh;
                out[i * n + j] = xh * g.data()[j] + b.data()[j];
            }
        }
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::LayerNorm {
                input: x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            rg,
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out: Vec<f64> = v
            .data()
            .iter()
            .map(|&a| 0.5 * a * (1.0 + (GELU_C * (a + GELU_A * a * a * a)).tanh()))
            .collect();
        let t = Tensor::new(v.shape().to_vec(), out).expect("same shape");
        let rg = self.any_grad(&[x]);
        self.push(t, Op::Gelu(x), rg)
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols needs at least one input".into()))?;
        let m = self.value(*first).matrix_dims("concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = self.value(*p).matrix_dims("concat_cols")?;
            if pm != m {
                return Err(Error::shape("concat_cols", self.value(*first).shape(), self.value(*p).shape()));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = self.value(*p).data();
            for i in 0..m {
                out[i * total + offset..i * total + offset + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::new(vec![m, total], out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, n) = t.matrix_dims("gather_rows")?;
        if ids.is_empty() {
            return Err(Error::Contract("gather_rows needs at least one id".into()));
        }
        let mut out = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index(format!("row {id} out of range for table with {rows} rows")));
            }
            out.extend_from_slice(t.row(id));
        }
        let rg = self.any_grad(&[table]);
        Ok(self.push(
            Tensor::new(vec![ids.len(), n], out)?,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean over non-ignored rows of `-log softmax(logits)[target]`, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore: usize) -> Result<Var> {
        let v = self.value(logits);
        let (m, n) = v.matrix_dims("cross_entropy")?;
        if targets.len() != m {
            return Err(Error::shape("cross_entropy", v.shape(), &[targets.len()]));
        }
        let mut probs = vec![0.0; m * n];
        let mut total = 0.0;
        let mut count = 0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(Error::Index(format!("target {t} out of range for {n} classes")));
            }
            let row = &v.data()[i * n..(i + 1) * n];
            softmax_into(row, &mut probs[i * n..(i + 1) * n]);
            if t == ignore {
                continue;
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
            count += 1;
        }
        if count == 0 {
            return Err(Error::Contract("cross-entropy needs at least one non-padding target".into()));
        }
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(total / count as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                ignore,
                probs,
                count,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Pure: may be called repeatedly.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.nodes[a.0].requires_grad {
                    let bt = transpose_raw(bv.data(), k, n);
                    send(*a, matmul_raw(g, &bt, m, n, k));
                }
                if self.nodes[b.0].requires_grad {
                    let at = transpose_raw(av.data(), m, k);
                    send(*b, matmul_raw(&at, g, k, m, n));
                }
            }
            Op::Elementwise {
                kind,
                lhs,
                rhs,
                broadcast,
            } => {
                let (av, bv) = (self.value(*lhs), self.value(*rhs));
                let n = bv.numel();
                let ga: Vec<f64> = match kind {
                    ElementwiseKind::Add | ElementwiseKind::Sub => g.to_vec(),
                    ElementwiseKind::Mul => g
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| gi * bv.data()[if *broadcast { i % n } else { i }])
                        .collect(),
                };
                let per_elem: Vec<f64> = match kind {
                    ElementwiseKind::Add => g.to_vec(),
                    ElementwiseKind::Sub => g.iter().map(|x| -x).collect(),
                    ElementwiseKind::Mul => g.iter().zip(av.data()).map(|(gi, a)| gi * a).collect(),
                };
                let gb = if *broadcast {
                    let mut acc = vec![0.0; n];
                    for (i, v) in per_elem.iter().enumerate() {
                        acc[i % n] += v;
                    }
                    acc
                } else {
                    per_elem
                };
                send(*lhs, ga);
                send(*rhs, gb);
            }
            Op::Scale(x, factor) => send(*x, g.iter().map(|v| v * factor).collect()),
            Op::Transpose(x) => {
                let (m, n) = (node.value.shape()[0], node.value.shape()[1]);
                send(*x, transpose_raw(g, m, n));
            }
            Op::Softmax { input } => {
                let y = node.value.data();
                let n = node.value.shape()[1];
                let mut gx = vec![0.0; y.len()];
                for (i, (yr, gr)) in y.chunks(n).zip(g.chunks(n)).enumerate() {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        gx[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                send(*input, gx);
            }
            Op::LayerNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let n = node.value.shape()[1];
                let gam = self.value(*gamma).data();
                let mut ggamma = vec![0.0; n];
                let mut gbeta = vec![0.0; n];
                let mut gx = vec![0.0; g.len()];
                for (i, gr) in g.chunks(n).enumerate() {
                    let xh = &normalized[i * n..(i + 1) * n];
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for j in 0..n {
                        ggamma[j] += gr[j] * xh[j];
                        gbeta[j] += gr[j];
                        let d = gr[j] * gam[j];
                        sum_d += d;
                        sum_dx += d * xh[j];
                    }
                    let r = inv_std[i] / n as f64;
                    for j in 0..n {
                        let d = gr[j] * gam[j];
                        gx[i * n + j] = r * (n as f64 * d - sum_d - xh[j] * sum_dx);
                    }
                }
                send(*input, gx);
                send(*gamma, ggamma);
                send(*beta, gbeta);
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                let gx = xv
                    .iter()
                    .zip(g)
                    .map(|(&a, gi)| {
                        let t = (GELU_C * (a + GELU_A * a * a * a)).tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_A * a * a);
                        gi * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * du)
                    })
                    .collect();
                send(*x, gx);
            }
            Op::ConcatCols(parts) => {
                let (m, total) = (node.value.shape()[0], node.value.shape()[1]);
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).shape()[1];
                    let mut gp = vec![0.0; m * w];
                    for i in 0..m {
                        gp[i * w..(i + 1) * w].copy_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    offset += w;
                    send(*p, gp);
                }
            }
            Op::GatherRows { table, ids } => {
                let tv = self.value(*table);
                let n = tv.shape()[1];
                let mut gt = vec![0.0; tv.numel()];
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..n {
                        gt[id * n + j] += g[r * n + j];
                    }
                }
                send(*table, gt);
            }
            Op::Sum(x) => send(*x, vec![g[0]; self.value(*x).numel()]),
            Op::CrossEntropy {
                logits,
                targets,
                ignore,
                probs,
                count,
            } => {
                let n = self.value(*logits).shape()[1];
                let scale = g[0] / *count as f64;
                let mut gl = vec![0.0; probs.len()];
                for (i, &t) in targets.iter().enumerate() {
                    if t == *ignore {
                        continue;
                    }
                    for j in 0..n {
                        gl[i * n + j] = scale * probs[i * n + j];
                    }
                    gl[i * n + t] -= scale;
                }
                send(*logits, gl);
            }
        }
    }
}

/// Result of [`Tape::backward`]: one optional gradient per node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` is unreachable from the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, zero-filled when unreachable.
    pub fn get_or_zeros(&self, v: Var, numel: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; numel], <[f64]>::to_vec)
    }
}

/// Stable softmax of `x` into `out`.
pub fn softmax_into(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

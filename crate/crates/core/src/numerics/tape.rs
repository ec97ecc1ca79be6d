//! Reverse-mode differentiation over a linear record of primitive operations.
//!
//! Every primitive appends one node holding its output value plus whatever it
//! needs for the adjoint. `backward` walks the nodes once in reverse order.
//! Parameters enter the tape as leaves; a parameter read by several nodes
//! collects the sum of all their adjoints, which is what makes repeated
//! execution of one layer trainable.

use std::collections::HashMap;

use crate::error::{config_err, data_err, Error, Result};

use super::kernels::{self, axpy, dot, gemm_nn, gemm_nt, gemm_tn};
use super::tensor::numel;
use super::{ParamId, ParameterStore, Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        p: usize,
        q: usize,
        r: usize,
        shared_rhs: bool,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        a: Var,
        s: T,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Softmax {
        x: Var,
    },
    Gelu {
        x: Var,
        tanh: Vec<T>,
    },
    Embed {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<T>,
        count: usize,
    },
    Transpose {
        x: Var,
    },
    SplitHeads {
        x: Var,
        heads: usize,
        parts: usize,
        part: usize,
    },
    MergeHeads {
        x: Var,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// The computation record for one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    param_leaves: HashMap<ParamId, Var>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            param_leaves: HashMap::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, what: &str) -> Result<Var> {
        value.check_finite(what)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        self.nodes
            .get(v.0)
            .ok_or_else(|| Error::Usage(format!("variable {} is not on this tape", v.0)))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Adjoint of `v` after [`Tape::backward`]; `None` if nothing reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Leaf, "constant")
    }

    /// Leaf for a stored parameter. Repeated calls return the same leaf.
    pub fn param(&mut self, store: &ParameterStore<T>, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.param_leaves.get(&id) {
            return Ok(v);
        }
        let value = store.value(id).clone();
        let v = self.push(value, Op::Param(id), &store.get(id).name)?;
        self.param_leaves.insert(id, v);
        Ok(v)
    }

    /// Batched matrix product `[.., p, q] × [.., q, r] → [.., p, r]`. The
    /// right operand may also be a plain `[q, r]` matrix shared by every batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.node(a)?.value.shape(), self.node(b)?.value.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(config_err!("matmul needs rank ≥ 2, got {sa:?} × {sb:?}"));
        }
        let (p, q) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (qb, r) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if q != qb {
            return Err(config_err!("matmul inner extents differ: {sa:?} × {sb:?}"));
        }
        let batch_a = &sa[..sa.len() - 2];
        let batch = numel(batch_a);
        let shared_rhs = sb.len() == 2;
        if !shared_rhs && batch_a != &sb[..sb.len() - 2] {
            return Err(config_err!("matmul batch extents differ: {sa:?} × {sb:?}"));
        }
        let mut shape = batch_a.to_vec();
        shape.extend([p, r]);
        let mut out = vec![T::zero(); batch * p * r];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        if shared_rhs {
            gemm_nn(av, bv, &mut out, batch * p, q, r);
        } else {
            for i in 0..batch {
                gemm_nn(
                    &av[i * p * q..(i + 1) * p * q],
                    &bv[i * q * r..(i + 1) * q * r],
                    &mut out[i * p * r..(i + 1) * p * r],
                    p,
                    q,
                    r,
                );
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push(
            value,
            Op::MatMul {
                a,
                b,
                batch,
                p,
                q,
                r,
                shared_rhs,
            },
            "matmul",
        )
    }

    /// Element-wise sum; `b` may be broadcast when its shape is a suffix of `a`'s.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.node(a)?.value.shape(), self.node(b)?.value.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(config_err!("add cannot broadcast {sb:?} onto {sa:?}"));
        }
        let mut out = self.value(a).clone();
        let bv = self.value(b).data();
        if !bv.is_empty() {
            for chunk in out.data_mut().chunks_exact_mut(bv.len()) {
                for (o, &x) in chunk.iter_mut().zip(bv) {
                    *o += x;
                }
            }
        }
        self.push(out, Op::Add { a, b }, "add")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.node(a)?;
        let s = T::from_f64(s);
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push(out, Op::Scale { a, s }, "scale")
    }

    /// Layer normalization over the last axis followed by `gamma * x̂ + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let c = self.node(x)?.value.last_dim();
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.node(v)?.value.shape() != [c] {
                return Err(config_err!("layer_norm {name} must have shape [{c}]"));
            }
        }
        let xs = self.value(x);
        let rows = xs.numel() / c.max(1);
        let mut xhat = vec![T::zero(); xs.numel()];
        let mut rstd = vec![T::zero(); rows];
        let eps = T::from_f64(eps);
        for i in 0..rows {
            rstd[i] = kernels::normalize_row(&xs.data()[i * c..(i + 1) * c], &mut xhat[i * c..(i + 1) * c], eps);
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = xhat.clone();
        for row in out.chunks_exact_mut(c) {
            for j in 0..c {
                row[j] = row[j] * g[j] + b[j];
            }
        }
        let value = Tensor::new(xs.shape().to_vec(), out)?;
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            "layer_norm",
        )
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, false)
    }

    /// Softmax over the last axis of `[.., t, t]` scores where entry `(i, j)`
    /// with `j > i` is masked out.
    pub fn causal_softmax(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, true)
    }

    fn softmax_impl(&mut self, x: Var, causal: bool) -> Result<Var> {
        let shape = self.node(x)?.value.shape().to_vec();
        let n = shape.last().copied().unwrap_or(1);
        if causal && (shape.len() < 2 || shape[shape.len() - 2] != n) {
            return Err(config_err!("causal softmax needs square trailing axes, got {shape:?}"));
        }
        let mut out = self.value(x).clone();
        for (i, row) in out.data_mut().chunks_exact_mut(n).enumerate() {
            let valid = if causal { i % n + 1 } else { n };
            kernels::softmax_row(row, valid);
        }
        self.push(out, Op::Softmax { x }, "softmax")
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.node(x)?;
        let mut out = self.value(x).clone();
        let tanh: Vec<T> = out.data().iter().map(|&v| kernels::gelu_tanh(v)).collect();
        let half = T::from_f64(0.5);
        for (v, &t) in out.data_mut().iter_mut().zip(&tanh) {
            *v = half * *v * (T::one() + t);
        }
        self.push(out, Op::Gelu { x, tanh }, "gelu")
    }

    /// Row lookup: `ids` laid out as `prefix` gives `[prefix.., width]`.
    pub fn embed(&mut self, table: Var, ids: &[usize], prefix: &[usize]) -> Result<Var> {
        let ts = self.node(table)?.value.shape();
        if ts.len() != 2 {
            return Err(config_err!("embedding table must be rank 2, got {ts:?}"));
        }
        if numel(prefix) != ids.len() {
            return Err(config_err!("embed: {} ids for prefix {prefix:?}", ids.len()));
        }
        let (rows, width) = (ts[0], ts[1]);
        if let Some(&bad) = ids.iter().find(|&&id| id >= rows) {
            return Err(data_err!("token id {bad} outside table of {rows} rows"));
        }
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            out.extend_from_slice(&tv[id * width..(id + 1) * width]);
        }
        let mut shape = prefix.to_vec();
        shape.push(width);
        let value = Tensor::new(shape, out)?;
        self.push(
            value,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            "embed",
        )
    }

    /// Mean next-token cross-entropy (nats) over all rows of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t: Vec<Option<usize>> = targets.iter().copied().map(Some).collect();
        self.cross_entropy_masked(logits, &t)
    }

    /// Cross-entropy where `None` targets are excluded from the mean.
    pub fn cross_entropy_masked(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let v = self.node(logits)?.value.last_dim();
        let lv = self.value(logits);
        let rows = lv.numel() / v.max(1);
        if rows != targets.len() {
            return Err(config_err!("cross_entropy: {} targets for {rows} rows", targets.len()));
        }
        let mut probs = lv.data().to_vec();
        let mut total = 0.0f64;
        let mut count = 0usize;
        for (row, target) in probs.chunks_exact_mut(v).zip(targets) {
            kernels::softmax_row(row, v);
            if let Some(t) = *target {
                if t >= v {
                    return Err(data_err!("target id {t} outside vocabulary of {v}"));
                }
                // log-softmax recomputed in f64 from the probability keeps the
                // loss finite when p underflows in f32.
                total -= row[t].as_f64().max(f64::MIN_POSITIVE).ln();
                count += 1;
            }
        }
        if count == 0 {
            return Err(data_err!("cross_entropy with no scored targets"));
        }
        let value = Tensor::scalar(T::from_f64(total / count as f64));
        self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            "cross_entropy",
        )
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let shape = self.node(x)?.value.shape().to_vec();
        if shape.len() < 2 {
            return Err(config_err!("transpose needs rank ≥ 2"));
        }
        let (m, n) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let out = transpose_blocks(self.value(x).data(), m, n);
        let mut new_shape = shape.clone();
        let l = new_shape.len();
        new_shape.swap(l - 2, l - 1);
        let value = Tensor::new(new_shape, out)?;
        self.push(value, Op::Transpose { x }, "transpose")
    }

    /// Takes slot `part` of `parts` equal slices of the last axis of
    /// `[b, t, parts*heads*d]` and lays it out as `[b, heads, t, d]`.
    pub fn split_heads(&mut self, x: Var, heads: usize, parts: usize, part: usize) -> Result<Var> {
        let shape = self.node(x)?.value.shape().to_vec();
        if shape.len() != 3 || part >= parts || shape[2] % (parts * heads) != 0 {
            return Err(config_err!("split_heads({heads}, {parts}, {part}) on {shape:?}"));
        }
        let (b, t, w) = (shape[0], shape[1], shape[2]);
        let d = w / (parts * heads);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); b * heads * t * d];
        for bi in 0..b {
            for ti in 0..t {
                let src = &xv[(bi * t + ti) * w + part * heads * d..];
                for h in 0..heads {
                    let dst = ((bi * heads + h) * t + ti) * d;
                    out[dst..dst + d].copy_from_slice(&src[h * d..(h + 1) * d]);
                }
            }
        }
        let value = Tensor::new(vec![b, heads, t, d], out)?;
        self.push(value, Op::SplitHeads { x, heads, parts, part }, "split_heads")
    }

    /// Inverse layout of [`Tape::split_heads`]: `[b, h, t, d] → [b, t, h*d]`.
    pub fn merge_heads(&mut self, x: Var) -> Result<Var> {
        let shape = self.node(x)?.value.shape().to_vec();
        if shape.len() != 4 {
            return Err(config_err!("merge_heads needs rank 4, got {shape:?}"));
        }
        let (b, h, t, d) = (shape[0], shape[1], shape[2], shape[3]);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); b * t * h * d];
        for bi in 0..b {
            for hi in 0..h {
                for ti in 0..t {
                    let src = ((bi * h + hi) * t + ti) * d;
                    let dst = (bi * t + ti) * h * d + hi * d;
                    out[dst..dst + d].copy_from_slice(&xv[src..src + d]);
                }
            }
        }
        let value = Tensor::new(vec![b, t, h * d], out)?;
        self.push(value, Op::MergeHeads { x }, "merge_heads")
    }

    fn accumulate(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
        grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
    }

    /// Propagates adjoints from the scalar `loss` back to every node and adds
    /// the parameter adjoints into the store's gradient accumulators.
    pub fn backward(&mut self, loss: Var, store: &mut ParameterStore<T>) -> Result<()> {
        let node = self.node(loss)?;
        if node.value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                &Op::MatMul {
                    a,
                    b,
                    batch,
                    p,
                    q,
                    r,
                    shared_rhs,
                } => {
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    {
                        let da = Self::accumulate(&mut grads, a, av.len());
                        if shared_rhs {
                            gemm_nt(&dy, bv, da, batch * p, q, r);
                        } else {
                            for i in 0..batch {
                                gemm_nt(
                                    &dy[i * p * r..(i + 1) * p * r],
                                    &bv[i * q * r..(i + 1) * q * r],
                                    &mut da[i * p * q..(i + 1) * p * q],
                                    p,
                                    q,
                                    r,
                                );
                            }
                        }
                    }
                    let db = Self::accumulate(&mut grads, b, bv.len());
                    if shared_rhs {
                        gemm_tn(av, &dy, db, batch * p, q, r);
                    } else {
                        for i in 0..batch {
                            gemm_tn(
                                &av[i * p * q..(i + 1) * p * q],
                                &dy[i * p * r..(i + 1) * p * r],
                                &mut db[i * q * r..(i + 1) * q * r],
                                p,
                                q,
                                r,
                            );
                        }
                    }
                }
                &Op::Add { a, b } => {
                    let da = Self::accumulate(&mut grads, a, dy.len());
                    axpy(T::one(), &dy, da);
                    let nb = self.nodes[b.0].value.numel();
                    let db = Self::accumulate(&mut grads, b, nb);
                    if nb > 0 {
                        for chunk in dy.chunks_exact(nb) {
                            axpy(T::one(), chunk, db);
                        }
                    }
                }
                &Op::Scale { a, s } => {
                    let da = Self::accumulate(&mut grads, a, dy.len());
                    axpy(s, &dy, da);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let c = self.nodes[gamma.0].value.numel();
                    let g = self.nodes[gamma.0].value.data();
                    let nf = T::from_f64(c as f64);
                    {
                        let dg = Self::accumulate(&mut grads, *gamma, c);
                        for (dyr, xr) in dy.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                            for j in 0..c {
                                dg[j] += dyr[j] * xr[j];
                            }
                        }
                    }
                    {
                        let db = Self::accumulate(&mut grads, *beta, c);
                        for dyr in dy.chunks_exact(c) {
                            axpy(T::one(), dyr, db);
                        }
                    }
                    let dx = Self::accumulate(&mut grads, *x, dy.len());
                    let mut dxhat = vec![T::zero(); c];
                    for (i, (dyr, xr)) in dy.chunks_exact(c).zip(xhat.chunks_exact(c)).enumerate() {
                        for j in 0..c {
                            dxhat[j] = dyr[j] * g[j];
                        }
                        let sum_d: T = dxhat.iter().copied().sum();
                        let sum_dx = dot(&dxhat, xr);
                        let k = rstd[i] / nf;
                        let out = &mut dx[i * c..(i + 1) * c];
                        for j in 0..c {
                            out[j] += k * (nf * dxhat[j] - sum_d - xr[j] * sum_dx);
                        }
                    }
                }
                &Op::Softmax { x } => {
                    let y = node.value.data();
                    let n = node.value.last_dim();
                    let dx = Self::accumulate(&mut grads, x, dy.len());
                    for ((yr, dyr), dxr) in y.chunks_exact(n).zip(dy.chunks_exact(n)).zip(dx.chunks_exact_mut(n)) {
                        let s = dot(yr, dyr);
                        for j in 0..n {
                            dxr[j] += yr[j] * (dyr[j] - s);
                        }
                    }
                }
                Op::Gelu { x, tanh } => {
                    let xv = self.nodes[x.0].value.data();
                    let dx = Self::accumulate(&mut grads, *x, dy.len());
                    for (((d, &g), &xi), &t) in dx.iter_mut().zip(&dy).zip(xv).zip(tanh) {
                        *d += g * kernels::gelu_grad_from_tanh(xi, t);
                    }
                }
                Op::Embed { table, ids } => {
                    let shape = self.nodes[table.0].value.shape();
                    let width = shape[1];
                    let dt = Self::accumulate(&mut grads, *table, shape[0] * width);
                    for (row, &id) in dy.chunks_exact(width).zip(ids) {
                        axpy(T::one(), row, &mut dt[id * width..(id + 1) * width]);
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                    count,
                } => {
                    let v = self.nodes[logits.0].value.last_dim();
                    let scale = dy[0] / T::from_f64(*count as f64);
                    let dl = Self::accumulate(&mut grads, *logits, probs.len());
                    for ((pr, dr), target) in probs.chunks_exact(v).zip(dl.chunks_exact_mut(v)).zip(targets) {
                        if let Some(t) = *target {
                            axpy(scale, pr, dr);
                            dr[t] -= scale;
                        }
                    }
                }
                &Op::Transpose { x } => {
                    let shape = node.value.shape();
                    let (m, n) = (shape[shape.len() - 2], shape[shape.len() - 1]);
                    let back = transpose_blocks(&dy, m, n);
                    let dx = Self::accumulate(&mut grads, x, dy.len());
                    axpy(T::one(), &back, dx);
                }
                &Op::SplitHeads { x, heads, parts, part } => {
                    let xs = self.nodes[x.0].value.shape();
                    let (b, t, w) = (xs[0], xs[1], xs[2]);
                    let d = w / (parts * heads);
                    let dx = Self::accumulate(&mut grads, x, b * t * w);
                    for bi in 0..b {
                        for ti in 0..t {
                            let base = (bi * t + ti) * w + part * heads * d;
                            for h in 0..heads {
                                let src = ((bi * heads + h) * t + ti) * d;
                                axpy(T::one(), &dy[src..src + d], &mut dx[base + h * d..base + (h + 1) * d]);
                            }
                        }
                    }
                }
                &Op::MergeHeads { x } => {
                    let xs = self.nodes[x.0].value.shape();
                    let (b, h, t, d) = (xs[0], xs[1], xs[2], xs[3]);
                    let dx = Self::accumulate(&mut grads, x, dy.len());
                    for bi in 0..b {
                        for hi in 0..h {
                            for ti in 0..t {
                                let dst = ((bi * h + hi) * t + ti) * d;
                                let src = (bi * t + ti) * h * d + hi * d;
                                axpy(T::one(), &dy[src..src + d], &mut dx[dst..dst + d]);
                            }
                        }
                    }
                }
            }
            grads[idx] = Some(dy);
        }

        for (node, g) in self.nodes.iter().zip(&grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                axpy(T::one(), g, store.get_mut(*id).grad.data_mut());
            }
        }
        self.grads = grads;
        store.check_grads_finite()
    }
}

fn transpose_blocks<T: Real>(x: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    let block = m * n;
    if block == 0 {
        return out;
    }
    for (src, dst) in x.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
        for i in 0..m {
            for j in 0..n {
                dst[j * m + i] = src[i * n + j];
            }
        }
    }
    out
}

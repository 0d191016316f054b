//! Tape-based reverse-mode automatic differentiation over [`Mat`].
//!
//! A [`Graph`] borrows a [`ParamStore`]; parameters enter the tape once per
//! graph and their gradients come back as [`Gradients`] indexed by
//! [`ParamId`]. Every op records what its backward pass needs.

use super::mat::{gemm_into, Mat};
use super::params::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Geometry of a batched multi-head attention call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnShape {
    pub batch: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub heads: usize,
    pub causal: bool,
}

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    SumAll(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Gather(Var, Vec<usize>),
    MaxPool(Var, Vec<usize>),
    LayerNorm {
        src: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    GruCell {
        xp: Var,
        gh: Var,
        h: Var,
        // r, z, n packed as [rows, 3H]
        gates: Mat,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Mat,
    },
    BceLogits {
        logits: Var,
        targets: Vec<f64>,
        mask: Option<Vec<bool>>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        shape: AttnShape,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Option<Mat>,
    op: Op,
}

/// Parameter gradients, indexed by [`ParamId`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().flatten().map(Mat::sq_norm).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the
    /// norm before clipping.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for g in self.grads.iter_mut().flatten() {
                g.data.iter_mut().for_each(|x| *x *= s);
            }
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.grads
            .iter()
            .flatten()
            .all(|g| g.data.iter().all(|x| x.is_finite()))
    }
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    Mat::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.store.value(*id),
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn input(&mut self, m: Mat) -> Var {
        self.push(m, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    /// Adds a `1 × cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (am, rm) = (self.value(a), self.value(row));
        assert_eq!((1, am.cols), rm.shape(), "add_row shape mismatch");
        let mut out = am.clone();
        for r in 0..out.rows {
            for (x, y) in out.row_mut(r).iter_mut().zip(&rm.data) {
                *x += y;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (am, rm) = (self.value(a), self.value(row));
        assert_eq!((1, am.cols), rm.shape(), "mul_row shape mismatch");
        let mut out = am.clone();
        for r in 0..out.rows {
            for (x, y) in out.row_mut(r).iter_mut().zip(&rm.data) {
                *x *= y;
            }
        }
        self.push(out, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        self.push(out, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Mat::scalar(s), Op::SumAll(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols, "slice_cols out of range");
        let mut out = Mat::zeros(m.rows, len);
        for r in 0..m.rows {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.rows, "slice_rows out of range");
        let out = Mat::from_vec(len, m.cols, m.data[start * m.cols..(start + len) * m.cols].to_vec());
        self.push(out, Op::SliceRows(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + m.cols].copy_from_slice(m.row(r));
            }
            off += m.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let m = self.value(a);
        let mut out = Mat::zeros(idx.len(), m.cols);
        for (i, &r) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(m.row(r));
        }
        self.push(out, Op::GatherRows(a, idx))
    }

    /// `out.data[i] = a.data[idx[i]]`, reshaped to `rows × cols`.
    pub fn gather(&mut self, a: Var, idx: Vec<usize>, rows: usize, cols: usize) -> Var {
        assert_eq!(idx.len(), rows * cols, "gather index count");
        let m = self.value(a);
        let out = Mat::from_vec(rows, cols, idx.iter().map(|&i| m.data[i]).collect());
        self.push(out, Op::Gather(a, idx))
    }

    /// Max-pools along rows inside consecutive blocks of `block` rows:
    /// window `kernel`, step `stride`, no padding; columns are independent.
    pub fn max_pool_rows(&mut self, a: Var, block: usize, kernel: usize, stride: usize) -> Var {
        let m = self.value(a);
        assert!(block >= kernel && m.rows % block == 0, "max_pool_rows geometry");
        let per_block = (block - kernel) / stride + 1;
        let blocks = m.rows / block;
        let mut out = Mat::zeros(blocks * per_block, m.cols);
        let mut argmax = vec![0usize; out.len()];
        for b in 0..blocks {
            for o in 0..per_block {
                let out_row = b * per_block + o;
                for c in 0..m.cols {
                    let mut best = (b * block + o * stride) * m.cols + c;
                    for k in 1..kernel {
                        let i = (b * block + o * stride + k) * m.cols + c;
                        if m.data[i] > m.data[best] {
                            best = i;
                        }
                    }
                    out.data[out_row * m.cols + c] = m.data[best];
                    argmax[out_row * m.cols + c] = best;
                }
            }
        }
        self.push(out, Op::MaxPool(a, argmax))
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let m = self.value(a);
        let mut xhat = Mat::zeros(m.rows, m.cols);
        let mut inv_std = Vec::with_capacity(m.rows);
        let n = m.cols as f64;
        for r in 0..m.rows {
            let row = m.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            for (o, x) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (x - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(
            xhat.clone(),
            Op::LayerNorm {
                src: a,
                xhat,
                inv_std,
            },
        )
    }

    /// Fused GRU update. `xp` is the input projection and `gh` the hidden
    /// projection, both `[rows, 3H]` in (reset, update, candidate) order.
    pub fn gru_cell(&mut self, xp: Var, gh: Var, h: Var) -> Var {
        let (xm, gm, hm) = (self.value(xp), self.value(gh), self.value(h));
        let hid = hm.cols;
        assert_eq!(xm.shape(), (hm.rows, 3 * hid), "gru_cell input projection shape");
        assert_eq!(gm.shape(), (hm.rows, 3 * hid), "gru_cell hidden projection shape");
        let mut gates = Mat::zeros(hm.rows, 3 * hid);
        let mut out = Mat::zeros(hm.rows, hid);
        for row in 0..hm.rows {
            let (x, g, hr) = (xm.row(row), gm.row(row), hm.row(row));
            for j in 0..hid {
                let r = sigmoid(x[j] + g[j]);
                let z = sigmoid(x[hid + j] + g[hid + j]);
                let n = (x[2 * hid + j] + r * g[2 * hid + j]).tanh();
                gates.data[row * 3 * hid + j] = r;
                gates.data[row * 3 * hid + hid + j] = z;
                gates.data[row * 3 * hid + 2 * hid + j] = n;
                out.data[row * hid + j] = n + z * (hr[j] - n);
            }
        }
        self.push(out, Op::GruCell { xp, gh, h, gates })
    }

    /// Sum over rows of `-log softmax(logits)[target]`; rows whose target
    /// is `None` contribute nothing.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<Option<usize>>) -> Var {
        let m = self.value(logits);
        assert_eq!(targets.len(), m.rows, "one target per row");
        let mut probs = Mat::zeros(m.rows, m.cols);
        let mut loss = 0.0;
        for r in 0..m.rows {
            let row = m.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
            for (p, x) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (x - max).exp() / sum;
            }
            if let Some(t) = targets[r] {
                loss += sum.ln() + max - row[t];
            }
        }
        self.push(
            Mat::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            },
        )
    }

    /// Summed binary cross-entropy on logits; `mask[i] == false` drops
    /// element `i`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<f64>, mask: Option<Vec<bool>>) -> Var {
        let m = self.value(logits);
        assert_eq!(targets.len(), m.len(), "one target per element");
        if let Some(mask) = &mask {
            assert_eq!(mask.len(), m.len(), "one mask bit per element");
        }
        let mut loss = 0.0;
        for (i, (&x, &y)) in m.data.iter().zip(&targets).enumerate() {
            if mask.as_ref().map_or(true, |mk| mk[i]) {
                loss += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
            }
        }
        self.push(
            Mat::scalar(loss),
            Op::BceLogits {
                logits,
                targets,
                mask,
            },
        )
    }

    /// Scaled dot-product attention over `heads` column groups.
    ///
    /// `q` is `[batch·q_len, d]`, `k` and `v` are `[batch·k_len, d]`; with
    /// `causal` set, query `i` only sees keys `j ≤ i`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, shape: AttnShape) -> Var {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let d = qm.cols;
        let AttnShape {
            batch,
            q_len,
            k_len,
            heads,
            causal,
        } = shape;
        assert_eq!(d % heads, 0, "model width not divisible by heads");
        assert_eq!(qm.rows, batch * q_len);
        assert_eq!((km.rows, km.cols), (batch * k_len, d));
        assert_eq!(vm.shape(), km.shape());
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut probs = vec![0.0; batch * heads * q_len * k_len];
        let mut out = Mat::zeros(batch * q_len, d);
        let mut scores = vec![0.0; k_len];
        for b in 0..batch {
            for h in 0..heads {
                let cols = h * dk..(h + 1) * dk;
                for i in 0..q_len {
                    let qi = &qm.row(b * q_len + i)[cols.clone()];
                    let visible = if causal { (i + 1).min(k_len) } else { k_len };
                    let mut max = f64::NEG_INFINITY;
                    for (j, s) in scores.iter_mut().enumerate().take(visible) {
                        let kj = &km.row(b * k_len + j)[cols.clone()];
                        *s = scale * qi.iter().zip(kj).map(|(a, c)| a * c).sum::<f64>();
                        max = max.max(*s);
                    }
                    let base = ((b * heads + h) * q_len + i) * k_len;
                    let mut sum = 0.0;
                    for j in 0..visible {
                        let e = (scores[j] - max).exp();
                        probs[base + j] = e;
                        sum += e;
                    }
                    let orow = b * q_len + i;
                    for j in 0..visible {
                        probs[base + j] /= sum;
                        let p = probs[base + j];
                        let vj = &vm.row(b * k_len + j)[cols.clone()];
                        let o = &mut out.data[orow * d + h * dk..orow * d + (h + 1) * dk];
                        for (oc, vc) in o.iter_mut().zip(vj) {
                            *oc += p * vc;
                        }
                    }
                }
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                shape,
                probs,
            },
        )
    }

    /// Back-propagates from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::scalar(1.0));
        let mut out = Gradients {
            grads: vec![None; self.store.len()],
        };

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out_val = node.value.as_ref();
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.grads[id.0] = Some(g),
                Op::MatMul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    if self.needs_grad(*a) {
                        accumulate(&mut grads, *a, || g.matmul_t(false, bm, true), |acc| {
                            gemm_into(&g, false, bm, true, acc, 1.0)
                        });
                    }
                    if self.needs_grad(*b) {
                        accumulate(&mut grads, *b, || am.matmul_t(true, &g, false), |acc| {
                            gemm_into(am, true, &g, false, acc, 1.0)
                        });
                    }
                }
                Op::Add(a, b) => {
                    add_grad(&mut grads, *a, &g);
                    add_grad(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    add_grad(&mut grads, *a, &g);
                    add_grad_owned(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    add_grad_owned(&mut grads, *a, zip_map(&g, bm, |x, y| x * y));
                    add_grad_owned(&mut grads, *b, zip_map(&g, am, |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    let mut rg = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (acc, x) in rg.data.iter_mut().zip(g.row(r)) {
                            *acc += x;
                        }
                    }
                    add_grad_owned(&mut grads, *row, rg);
                    add_grad_owned(&mut grads, *a, g);
                }
                Op::MulRow(a, row) => {
                    let (am, rm) = (self.value(*a), self.value(*row));
                    let mut rg = Mat::zeros(1, g.cols);
                    let mut ag = g.clone();
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            rg.data[c] += g.get(r, c) * am.get(r, c);
                            ag.data[r * g.cols + c] *= rm.data[c];
                        }
                    }
                    add_grad_owned(&mut grads, *row, rg);
                    add_grad_owned(&mut grads, *a, ag);
                }
                Op::Scale(a, s) => add_grad_owned(&mut grads, *a, g.map(|x| x * s)),
                Op::AddScalar(a) => add_grad_owned(&mut grads, *a, g),
                Op::Sigmoid(a) => {
                    let y = out_val.expect("value");
                    add_grad_owned(&mut grads, *a, zip_map(&g, y, |gx, s| gx * s * (1.0 - s)));
                }
                Op::Tanh(a) => {
                    let y = out_val.expect("value");
                    add_grad_owned(&mut grads, *a, zip_map(&g, y, |gx, t| gx * (1.0 - t * t)));
                }
                Op::Relu(a) => {
                    let y = out_val.expect("value");
                    add_grad_owned(&mut grads, *a, zip_map(&g, y, |gx, r| if r > 0.0 { gx } else { 0.0 }));
                }
                Op::Exp(a) => {
                    let y = out_val.expect("value");
                    add_grad_owned(&mut grads, *a, zip_map(&g, y, |gx, e| gx * e));
                }
                Op::SumAll(a) => {
                    let (r, c) = self.shape(*a);
                    add_grad_owned(&mut grads, *a, Mat::filled(r, c, g.item()));
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut full = Mat::zeros(r, c);
                    for row in 0..r {
                        full.row_mut(row)[*start..*start + g.cols].copy_from_slice(g.row(row));
                    }
                    add_grad_owned(&mut grads, *a, full);
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut full = Mat::zeros(r, c);
                    full.data[start * c..(start + g.rows) * c].copy_from_slice(&g.data);
                    add_grad_owned(&mut grads, *a, full);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.shape(p).1;
                        let mut pg = Mat::zeros(g.rows, pc);
                        for r in 0..g.rows {
                            pg.row_mut(r).copy_from_slice(&g.row(r)[off..off + pc]);
                        }
                        add_grad_owned(&mut grads, p, pg);
                        off += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (pr, pc) = self.shape(p);
                        let pg = Mat::from_vec(pr, pc, g.data[off * pc..(off + pr) * pc].to_vec());
                        add_grad_owned(&mut grads, p, pg);
                        off += pr;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut full = Mat::zeros(r, c);
                    for (i, &src) in idx.iter().enumerate() {
                        for (acc, x) in full.row_mut(src).iter_mut().zip(g.row(i)) {
                            *acc += x;
                        }
                    }
                    add_grad_owned(&mut grads, *a, full);
                }
                Op::Gather(a, idx) | Op::MaxPool(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut full = Mat::zeros(r, c);
                    for (i, &src) in idx.iter().enumerate() {
                        full.data[src] += g.data[i];
                    }
                    add_grad_owned(&mut grads, *a, full);
                }
                Op::LayerNorm { src, xhat, inv_std } => {
                    let n = g.cols as f64;
                    let mut dx = Mat::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let (gr, xr) = (g.row(r), xhat.row(r));
                        let sum_g: f64 = gr.iter().sum();
                        let sum_gx: f64 = gr.iter().zip(xr).map(|(a, b)| a * b).sum();
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = inv_std[r] / n * (n * gr[c] - sum_g - xr[c] * sum_gx);
                        }
                    }
                    add_grad_owned(&mut grads, *src, dx);
                }
                Op::GruCell { xp, gh, h, gates } => {
                    let (hm, gm) = (self.value(*h), self.value(*gh));
                    let hid = hm.cols;
                    let mut dxp = Mat::zeros(hm.rows, 3 * hid);
                    let mut dgh = Mat::zeros(hm.rows, 3 * hid);
                    let mut dh = Mat::zeros(hm.rows, hid);
                    for row in 0..hm.rows {
                        let gate = gates.row(row);
                        for j in 0..hid {
                            let (r, z, n) = (gate[j], gate[hid + j], gate[2 * hid + j]);
                            let go = g.data[row * hid + j];
                            let hp = hm.data[row * hid + j];
                            let hn = gm.data[row * 3 * hid + 2 * hid + j];
                            let dn = go * (1.0 - z);
                            let dz = go * (hp - n);
                            dh.data[row * hid + j] = go * z;
                            let dan = dn * (1.0 - n * n);
                            let daz = dz * z * (1.0 - z);
                            let dar = dan * hn * r * (1.0 - r);
                            let base = row * 3 * hid;
                            dxp.data[base + j] = dar;
                            dxp.data[base + hid + j] = daz;
                            dxp.data[base + 2 * hid + j] = dan;
                            dgh.data[base + j] = dar;
                            dgh.data[base + hid + j] = daz;
                            dgh.data[base + 2 * hid + j] = dan * r;
                        }
                    }
                    add_grad_owned(&mut grads, *xp, dxp);
                    add_grad_owned(&mut grads, *gh, dgh);
                    add_grad_owned(&mut grads, *h, dh);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let s = g.item();
                    let mut dl = Mat::zeros(probs.rows, probs.cols);
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            for (o, p) in dl.row_mut(r).iter_mut().zip(probs.row(r)) {
                                *o = s * p;
                            }
                            dl.data[r * probs.cols + t] -= s;
                        }
                    }
                    add_grad_owned(&mut grads, *logits, dl);
                }
                Op::BceLogits {
                    logits,
                    targets,
                    mask,
                } => {
                    let s = g.item();
                    let lm = self.value(*logits);
                    let mut dl = Mat::zeros(lm.rows, lm.cols);
                    for (i, o) in dl.data.iter_mut().enumerate() {
                        if mask.as_ref().map_or(true, |mk| mk[i]) {
                            *o = s * (sigmoid(lm.data[i]) - targets[i]);
                        }
                    }
                    add_grad_owned(&mut grads, *logits, dl);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    shape,
                    probs,
                } => {
                    let (dq, dk, dv) = self.attention_backward(*q, *k, *v, *shape, probs, &g);
                    add_grad_owned(&mut grads, *q, dq);
                    add_grad_owned(&mut grads, *k, dk);
                    add_grad_owned(&mut grads, *v, dv);
                }
            }
        }
        out
    }

    fn needs_grad(&self, v: Var) -> bool {
        !matches!(self.nodes[v.0].op, Op::Input)
    }

    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        shape: AttnShape,
        probs: &[f64],
        g: &Mat,
    ) -> (Mat, Mat, Mat) {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let d = qm.cols;
        let AttnShape {
            batch,
            q_len,
            k_len,
            heads,
            causal,
        } = shape;
        let dkh = d / heads;
        let scale = 1.0 / (dkh as f64).sqrt();
        let mut dq = Mat::zeros(qm.rows, d);
        let mut dk = Mat::zeros(km.rows, d);
        let mut dv = Mat::zeros(vm.rows, d);
        let mut dp = vec![0.0; k_len];
        for b in 0..batch {
            for h in 0..heads {
                let c0 = h * dkh;
                for i in 0..q_len {
                    let visible = if causal { (i + 1).min(k_len) } else { k_len };
                    let base = ((b * heads + h) * q_len + i) * k_len;
                    let qrow = b * q_len + i;
                    let go = &g.data[qrow * d + c0..qrow * d + c0 + dkh];
                    let mut dot = 0.0;
                    for j in 0..visible {
                        let krow = b * k_len + j;
                        let vj = &vm.data[krow * d + c0..krow * d + c0 + dkh];
                        dp[j] = go.iter().zip(vj).map(|(a, c)| a * c).sum();
                        dot += probs[base + j] * dp[j];
                        let p = probs[base + j];
                        for c in 0..dkh {
                            dv.data[krow * d + c0 + c] += p * go[c];
                        }
                    }
                    for j in 0..visible {
                        let ds = probs[base + j] * (dp[j] - dot) * scale;
                        let krow = b * k_len + j;
                        for c in 0..dkh {
                            dq.data[qrow * d + c0 + c] += ds * km.data[krow * d + c0 + c];
                            dk.data[krow * d + c0 + c] += ds * qm.data[qrow * d + c0 + c];
                        }
                    }
                }
            }
        }
        (dq, dk, dv)
    }
}

fn add_grad(grads: &mut [Option<Mat>], v: Var, g: &Mat) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(g),
        slot => *slot = Some(g.clone()),
    }
}

fn add_grad_owned(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn accumulate(
    grads: &mut [Option<Mat>],
    v: Var,
    fresh: impl FnOnce() -> Mat,
    into: impl FnOnce(&mut Mat),
) {
    match &mut grads[v.0] {
        Some(acc) => into(acc),
        slot => *slot = Some(fresh()),
    }
}

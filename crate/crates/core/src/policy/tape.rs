//! Reverse-mode automatic differentiation over matrix operations.
//!
//! A [`Tape`] records every forward operation with the values its backward
//! pass needs. Attention, pointer scoring and the masked categorical are
//! fused operations with hand-written adjoints.

use crate::error::{Error, Result};

use super::params::ParamSet;
use super::tensor::{gemm_into, gemm_view, Matrix, View};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Value<'p> {
    Owned(Matrix),
    Borrowed(&'p Matrix),
}

impl Value<'_> {
    fn get(&self) -> &Matrix {
        match self {
            Value::Owned(m) => m,
            Value::Borrowed(m) => m,
        }
    }
}

enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    MeanRows(Var),
    Gather(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<f64>,
    },
    Pointer {
        g: Var,
        k: Var,
        clip: f64,
        tanh: Matrix,
        mask: Vec<bool>,
    },
    Categorical {
        logits: Var,
        actions: Vec<usize>,
        logp: Matrix,
        entropy: Vec<f64>,
    },
}

struct Node<'p> {
    value: Value<'p>,
    op: Op,
}

/// Masked-softmax statistics of one row of logits (`-inf` = masked).
pub struct RowDistribution<'a> {
    pub logp: &'a [f64],
}

impl RowDistribution<'_> {
    pub fn prob(&self, a: usize) -> f64 {
        self.logp[a].exp()
    }
}

#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value<'p>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn owned(&mut self, value: Matrix, op: Op) -> Var {
        self.push(Value::Owned(value), op)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        self.nodes[v.0].value.get()
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.owned(m, Op::Constant)
    }

    pub fn param(&mut self, params: &'p ParamSet, id: usize) -> Var {
        self.push(Value::Borrowed(params.get(id)), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.owned(out, Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!((1, self.value(x).cols()), b.shape(), "bias shape");
        let mut out = self.value(x).clone();
        for r in 0..out.rows() {
            for (o, bb) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += bb;
            }
        }
        self.owned(out, Op::AddBias(x, bias))
    }

    /// `x · w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add_bias(h, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.owned(out, Op::Add(a, b))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.owned(out, Op::Relu(x))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let mut out = xhat.clone();
        for r in 0..rows {
            for ((o, gg), bb) in out.row_mut(r).iter_mut().zip(g.data()).zip(b.data()) {
                *o = *o * gg + bb;
            }
        }
        self.owned(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = Matrix::zeros(1, xv.cols());
        for r in 0..xv.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        out.scale(1.0 / xv.rows() as f64);
        self.owned(out, Op::MeanRows(x))
    }

    /// Rows of `x` selected by `idx` (repeats allowed).
    pub fn gather(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let xv = self.value(x);
        let mut out = Matrix::zeros(idx.len(), xv.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(xv.row(i));
        }
        self.owned(out, Op::Gather(x, idx))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in &parts {
                let pv = self.value(p);
                assert_eq!(pv.rows(), rows, "concat_cols rows");
                out.row_mut(r)[c0..c0 + pv.cols()].copy_from_slice(pv.row(r));
                c0 += pv.cols();
            }
        }
        self.owned(out, Op::ConcatCols(parts))
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in &parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "concat_rows cols");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        self.owned(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts))
    }

    /// Multi-head scaled dot-product attention of queries `q` over keys `k`
    /// and values `v` (all with `d` columns split into `heads` blocks).
    /// `mask[i * nk + j] == true` hides key `j` from query `i`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, mask: Option<&[bool]>) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (nq, d) = qv.shape();
        let nk = kv.rows();
        assert_eq!(kv.cols(), d);
        assert_eq!(vv.shape(), (nk, d));
        assert_eq!(d % heads, 0, "heads must divide width");
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let block = nq * nk;
        let mut probs = vec![0.0; heads * block];
        let mut out = Matrix::zeros(nq, d);
        for h in 0..heads {
            let c0 = h * dh;
            let p = &mut probs[h * block..(h + 1) * block];
            gemm_view(
                nq,
                dh,
                nk,
                scale,
                View::cols_of(qv, c0, false),
                View::cols_of(kv, c0, true),
                0.0,
                p,
                0,
                nk,
            );
            for i in 0..nq {
                let row = &mut p[i * nk..(i + 1) * nk];
                if let Some(m) = mask {
                    for (x, &hide) in row.iter_mut().zip(&m[i * nk..(i + 1) * nk]) {
                        if hide {
                            *x = f64::NEG_INFINITY;
                        }
                    }
                }
                softmax_in_place(row);
            }
            let pv = View {
                data: &probs[h * block..(h + 1) * block],
                offset: 0,
                rs: nk as isize,
                cs: 1,
            };
            gemm_view(nq, nk, dh, 1.0, pv, View::cols_of(vv, c0, false), 0.0, out.data_mut(), c0, d);
        }
        self.owned(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
        )
    }

    /// Pointer compatibilities `clip * tanh(g · kᵀ / sqrt(d))`, with masked
    /// entries set to `-inf`.
    pub fn pointer(&mut self, g: Var, k: Var, clip: f64, mask: &[bool]) -> Var {
        let (gv, kv) = (self.value(g), self.value(k));
        let d = gv.cols();
        let (rows, n) = (gv.rows(), kv.rows());
        assert_eq!(mask.len(), rows * n, "pointer mask shape");
        let mut t = Matrix::zeros(rows, n);
        gemm_into(1.0 / (d as f64).sqrt(), gv, false, kv, true, 0.0, &mut t);
        let mut out = Matrix::zeros(rows, n);
        for ((tv, o), &hide) in t.data_mut().iter_mut().zip(out.data_mut()).zip(mask) {
            if hide {
                *tv = 0.0;
                *o = f64::NEG_INFINITY;
            } else {
                *tv = tv.tanh();
                *o = clip * *tv;
            }
        }
        self.owned(
            out,
            Op::Pointer {
                g,
                k,
                clip,
                tanh: t,
                mask: mask.to_vec(),
            },
        )
    }

    /// Row-wise masked categorical over `logits` (`-inf` = masked).
    ///
    /// `choose(row, dist)` picks the action of each row. The output is a
    /// `rows x 2` matrix of `[log p(action), entropy]` in nats.
    pub fn categorical<F>(&mut self, logits: Var, step: usize, mut choose: F) -> Result<Var>
    where
        F: FnMut(usize, &RowDistribution<'_>) -> Result<usize>,
    {
        let lv = self.value(logits);
        let (rows, n) = lv.shape();
        let mut logp = Matrix::zeros(rows, n);
        let mut entropy = Vec::with_capacity(rows);
        let mut actions = Vec::with_capacity(rows);
        let mut out = Matrix::zeros(rows, 2);
        for r in 0..rows {
            let row = lv.row(r);
            let lp = logp.row_mut(r);
            log_softmax(row, lp).ok_or(Error::DecodeDeadEnd { step })?;
            let mut h = 0.0;
            for &l in lp.iter() {
                if l > f64::NEG_INFINITY {
                    h -= l.exp() * l;
                }
            }
            let dist = RowDistribution { logp: lp };
            let a = choose(r, &dist)?;
            if a >= n || lp[a] == f64::NEG_INFINITY {
                return Err(Error::Masking { step, action: a });
            }
            out.set(r, 0, lp[a]);
            out.set(r, 1, h);
            entropy.push(h);
            actions.push(a);
        }
        Ok(self.owned(
            out,
            Op::Categorical {
                logits,
                actions,
                logp,
                entropy,
            },
        ))
    }

    /// Action chosen for `row` by the categorical node `out`.
    pub fn categorical_action(&self, out: Var, row: usize) -> usize {
        match &self.nodes[out.0].op {
            Op::Categorical { actions, .. } => actions[row],
            _ => panic!("not a categorical node"),
        }
    }

    /// Propagates `seeds` (upstream gradients of chosen nodes) back through
    /// the tape, accumulating parameter gradients into `param_grads`.
    pub fn backward(&self, seeds: &[(Var, Matrix)], param_grads: &mut [Matrix]) {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            assert_eq!(g.shape(), self.value(*v).shape(), "seed shape");
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(g),
                slot => *slot = Some(g.clone()),
            }
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads, param_grads);
        }
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Matrix>], v: Var) -> &'g mut Matrix {
        let (r, c) = self.value(v).shape();
        grads[v.0].get_or_insert_with(|| Matrix::zeros(r, c))
    }

    fn backprop_node(
        &self,
        i: usize,
        g: &Matrix,
        grads: &mut [Option<Matrix>],
        param_grads: &mut [Matrix],
    ) {
        match &self.nodes[i].op {
            Op::Constant => {}
            Op::Param(id) => param_grads[*id].add_assign(g),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                gemm_into(1.0, g, false, bv, true, 1.0, self.grad_slot(grads, *a));
                gemm_into(1.0, av, true, g, false, 1.0, self.grad_slot(grads, *b));
            }
            Op::AddBias(x, bias) => {
                self.grad_slot(grads, *x).add_assign(g);
                let gb = self.grad_slot(grads, *bias);
                for r in 0..g.rows() {
                    for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
            }
            Op::Add(a, b) => {
                self.grad_slot(grads, *a).add_assign(g);
                self.grad_slot(grads, *b).add_assign(g);
            }
            Op::Relu(x) => {
                let y = self.nodes[i].value.get();
                let gx = self.grad_slot(grads, *x);
                for ((o, gv), yv) in gx.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    if *yv > 0.0 {
                        *o += gv;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gain_v = self.value(*gain);
                let (rows, cols) = g.shape();
                {
                    let gg = self.grad_slot(grads, *gain);
                    for r in 0..rows {
                        for ((o, gv), xh) in gg.data_mut().iter_mut().zip(g.row(r)).zip(xhat.row(r)) {
                            *o += gv * xh;
                        }
                    }
                }
                {
                    let gb = self.grad_slot(grads, *bias);
                    for r in 0..rows {
                        for (o, gv) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += gv;
                        }
                    }
                }
                let gx = self.grad_slot(grads, *x);
                let mut dxhat = vec![0.0; cols];
                for r in 0..rows {
                    let xh = xhat.row(r);
                    for ((d, gv), gn) in dxhat.iter_mut().zip(g.row(r)).zip(gain_v.data()) {
                        *d = gv * gn;
                    }
                    let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
                    let mean_dx = dxhat.iter().zip(xh).map(|(d, x)| d * x).sum::<f64>() / cols as f64;
                    for ((o, d), x) in gx.row_mut(r).iter_mut().zip(&dxhat).zip(xh) {
                        *o += inv_std[r] * (d - mean_d - x * mean_dx);
                    }
                }
            }
            Op::MeanRows(x) => {
                let rows = self.value(*x).rows();
                let inv = 1.0 / rows as f64;
                let gx = self.grad_slot(grads, *x);
                for r in 0..rows {
                    for (o, v) in gx.row_mut(r).iter_mut().zip(g.data()) {
                        *o += v * inv;
                    }
                }
            }
            Op::Gather(x, idx) => {
                let gx = self.grad_slot(grads, *x);
                for (r, &src) in idx.iter().enumerate() {
                    for (o, v) in gx.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let gp = self.grad_slot(grads, p);
                    for r in 0..g.rows() {
                        for (o, v) in gp.row_mut(r).iter_mut().zip(&g.row(r)[c0..c0 + w]) {
                            *o += v;
                        }
                    }
                    c0 += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut r0 = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    let gp = self.grad_slot(grads, p);
                    for r in 0..h {
                        for (o, v) in gp.row_mut(r).iter_mut().zip(g.row(r0 + r)) {
                            *o += v;
                        }
                    }
                    r0 += h;
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => self.backprop_attention(g, *q, *k, *v, *heads, probs, grads),
            Op::Pointer {
                g: gq,
                k,
                clip,
                tanh,
                mask,
            } => {
                let d = self.value(*gq).cols();
                let scale = 1.0 / (d as f64).sqrt();
                let mut dt = Matrix::zeros(g.rows(), g.cols());
                for (((o, gv), t), &hide) in dt.data_mut().iter_mut().zip(g.data()).zip(tanh.data()).zip(mask) {
                    if !hide {
                        *o = gv * clip * (1.0 - t * t) * scale;
                    }
                }
                let (gqv, kv) = (self.value(*gq), self.value(*k));
                gemm_into(1.0, &dt, false, kv, false, 1.0, self.grad_slot(grads, *gq));
                gemm_into(1.0, &dt, true, gqv, false, 1.0, self.grad_slot(grads, *k));
            }
            Op::Categorical {
                logits,
                actions,
                logp,
                entropy,
            } => {
                let gl = self.grad_slot(grads, *logits);
                for r in 0..g.rows() {
                    let (d_lp, d_h) = (g.get(r, 0), g.get(r, 1));
                    let a = actions[r];
                    let h = entropy[r];
                    for (k, (o, &l)) in gl.row_mut(r).iter_mut().zip(logp.row(r)).enumerate() {
                        if l == f64::NEG_INFINITY {
                            continue;
                        }
                        let p = l.exp();
                        let onehot = if k == a { 1.0 } else { 0.0 };
                        *o += d_lp * (onehot - p) - d_h * p * (l + h);
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_attention(
        &self,
        g: &Matrix,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: &[f64],
        grads: &mut [Option<Matrix>],
    ) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (nq, d) = qv.shape();
        let nk = kv.rows();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let block = nq * nk;
        let mut ds = vec![0.0; block];
        let mut dq = Matrix::zeros(nq, d);
        let mut dk = Matrix::zeros(nk, d);
        let mut dv = Matrix::zeros(nk, d);
        for h in 0..heads {
            let c0 = h * dh;
            let p = &probs[h * block..(h + 1) * block];
            // dP = dO_h · V_hᵀ
            gemm_view(
                nq,
                dh,
                nk,
                1.0,
                View::cols_of(g, c0, false),
                View::cols_of(vv, c0, true),
                0.0,
                &mut ds,
                0,
                nk,
            );
            // dV_h += P_hᵀ · dO_h
            let pt = View {
                data: p,
                offset: 0,
                rs: 1,
                cs: nk as isize,
            };
            gemm_view(nk, nq, dh, 1.0, pt, View::cols_of(g, c0, false), 1.0, dv.data_mut(), c0, d);
            // softmax adjoint, folding in the score scale
            for i in 0..nq {
                let pr = &p[i * nk..(i + 1) * nk];
                let dr = &mut ds[i * nk..(i + 1) * nk];
                let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                for (x, pp) in dr.iter_mut().zip(pr) {
                    *x = pp * (*x - dot) * scale;
                }
            }
            let dsv = View {
                data: &ds,
                offset: 0,
                rs: nk as isize,
                cs: 1,
            };
            let dst = View {
                data: &ds,
                offset: 0,
                rs: 1,
                cs: nk as isize,
            };
            gemm_view(nq, nk, dh, 1.0, dsv, View::cols_of(kv, c0, false), 1.0, dq.data_mut(), c0, d);
            gemm_view(nk, nq, dh, 1.0, dst, View::cols_of(qv, c0, false), 1.0, dk.data_mut(), c0, d);
        }
        self.grad_slot(grads, q).add_assign(&dq);
        self.grad_slot(grads, k).add_assign(&dk);
        self.grad_slot(grads, v).add_assign(&dv);
    }
}

/// In-place softmax of a row whose masked entries are `-inf`.
fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        row.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Writes log-softmax of `row` into `out`; `None` if every entry is masked.
pub(crate) fn log_softmax(row: &[f64], out: &mut [f64]) -> Option<()> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
    let lse = max + sum.ln();
    for (o, x) in out.iter_mut().zip(row) {
        *o = x - lse;
    }
    Some(())
}

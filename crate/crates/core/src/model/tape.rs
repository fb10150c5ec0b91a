//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward computation. Calling
//! [`Tape::backward`] walks the record in reverse and accumulates exact
//! gradients into a [`Gradients`] set aligned with the parameter store.

use std::rc::Rc;

use super::tensor::{self, Mat};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug)]
pub struct Var(usize);

/// Which keys each query row may attend to.
#[derive(Clone, Debug)]
pub enum AttnMask {
    Full,
    /// Square causal mask: row `i` sees columns `0..=i`.
    Causal,
    /// Explicit row-major allow matrix.
    Dense {
        rows: usize,
        cols: usize,
        allowed: Rc<Vec<bool>>,
    },
}

impl AttnMask {
    fn allows(&self, i: usize, j: usize) -> bool {
        match self {
            AttnMask::Full => true,
            AttnMask::Causal => j <= i,
            AttnMask::Dense { cols, allowed, .. } => allowed[i * cols + j],
        }
    }
}

enum Op {
    Input,
    Param(ParamId),
    Gather(Vec<(ParamId, usize)>),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MaskedSoftmax(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Mat,
        rstd: Vec<f64>,
    },
    ColSlice(Var, usize),
    ConcatCols(Vec<Var>),
    RowSlice(Var, usize),
    ConcatRows(Vec<Var>),
    Dropout(Var, Vec<f64>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Mat,
    },
}

struct Node {
    op: Op,
    value: Option<Mat>,
}

/// Gradient buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    tensors: Vec<Mat>,
}

impl Gradients {
    pub fn zeros_like(params: &[Mat]) -> Self {
        Self {
            tensors: params.iter().map(|m| Mat::zeros(m.rows(), m.cols())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Mat] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.tensors.iter().map(Mat::sum_sq).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    fn add_to(&mut self, id: ParamId, grad: &Mat) {
        self.tensors[id.0].add_assign(grad);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044715;
const LN_EPS: f64 = 1e-5;

pub struct Tape<'p> {
    params: &'p [Mat],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Mat]) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(id), _) => &self.params[id.0],
            (_, Some(m)) => m,
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, m: Mat) -> Var {
        self.push(Op::Input, m)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Stacks rows picked from parameter tables (embedding lookup).
    pub fn gather(&mut self, rows: Vec<(ParamId, usize)>) -> Var {
        let cols = rows.first().map_or(0, |(p, _)| self.params[p.0].cols());
        let mut out = Mat::zeros(rows.len(), cols);
        for (i, &(p, r)) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.params[p.0].row(r));
        }
        self.push(Op::Gather(rows), out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = tensor::matmul(self.value(a), self.value(b));
        self.push(Op::MatMul(a, b), out)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = tensor::matmul_nt(self.value(a), self.value(b));
        self.push(Op::MatMulNt(a, b), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(Op::Add(a, b), out)
    }

    /// Adds a `1×n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1);
        let mut out = self.value(x).clone();
        for r in 0..out.rows() {
            for (o, v) in out.row_mut(r).iter_mut().zip(b.row(0)) {
                *o += v;
            }
        }
        self.push(Op::AddRow(x, bias), out)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(Op::Scale(x, s), out)
    }

    /// Row softmax over allowed entries; masked entries become exactly 0.
    pub fn masked_softmax(&mut self, x: Var, mask: &AttnMask) -> Var {
        let xv = self.value(x);
        let mut out = Mat::zeros(xv.rows(), xv.cols());
        for i in 0..xv.rows() {
            let row = xv.row(i);
            let mut max = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if mask.allows(i, j) && v > max {
                    max = v;
                }
            }
            let mut total = 0.0;
            let out_row = out.row_mut(i);
            for (j, &v) in row.iter().enumerate() {
                if mask.allows(i, j) {
                    let e = (v - max).exp();
                    out_row[j] = e;
                    total += e;
                }
            }
            for o in out_row.iter_mut() {
                *o /= total;
            }
        }
        self.push(Op::MaskedSoftmax(x), out)
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self
            .value(x)
            .map(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_K * v * v * v)).tanh()));
        self.push(Op::Gelu(x), out)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut normed = Mat::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            for (o, v) in normed.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
            rstd.push(s);
        }
        let g = self.value(gain).row(0);
        let b = self.value(bias).row(0);
        let mut out = normed.clone();
        for r in 0..rows {
            for ((o, gv), bv) in out.row_mut(r).iter_mut().zip(g).zip(b) {
                *o = *o * gv + bv;
            }
        }
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                rstd,
            },
            out,
        )
    }

    pub fn col_slice(&mut self, x: Var, start: usize, width: usize) -> Var {
        let xv = self.value(x);
        let mut out = Mat::zeros(xv.rows(), width);
        for r in 0..xv.rows() {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + width]);
        }
        self.push(Op::ColSlice(x, start), out)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    pub fn row_slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x).select_rows(start, len);
        self.push(Op::RowSlice(x, start), out)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols.max(1);
        self.push(Op::ConcatRows(parts.to_vec()), Mat::from_vec(rows, cols, data))
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut SeededRng) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - p);
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.data().len())
            .map(|_| if rng.chance(p) { 0.0 } else { keep })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Mat::from_vec(xv.rows(), xv.cols(), data);
        self.push(Op::Dropout(x, mask), out)
    }

    /// Summed negative log-likelihood of `targets[t]` under row `t` of
    /// `logits`; a `1×1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len());
        let mut probs = Mat::zeros(lv.rows(), lv.cols());
        let mut total = 0.0;
        for (t, &y) in targets.iter().enumerate() {
            let logp = tensor::log_softmax(lv.row(t));
            total -= logp[y];
            for (o, lp) in probs.row_mut(t).iter_mut().zip(&logp) {
                *o = lp.exp();
            }
        }
        self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            Mat::filled(1, 1, total),
        )
    }

    /// Accumulates `seed · ∂root/∂θ` into `grads`.
    pub fn backward(&self, root: Var, seed: f64, grads: &mut Gradients) {
        let mut adj: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let shape = self.value(root).shape();
        adj[root.0] = Some(Mat::filled(shape.0, shape.1, seed));

        fn accum(adj: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut adj[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(id) => grads.add_to(*id, &g),
                Op::Gather(rows) => {
                    for (i, &(p, r)) in rows.iter().enumerate() {
                        let target = grads.tensors[p.0].row_mut(r);
                        for (t, v) in target.iter_mut().zip(g.row(i)) {
                            *t += v;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let da = tensor::matmul_nt(&g, self.value(*b));
                    let db = tensor::matmul_tn(self.value(*a), &g);
                    accum(&mut adj, *a, da);
                    accum(&mut adj, *b, db);
                }
                Op::MatMulNt(a, b) => {
                    let da = tensor::matmul(&g, self.value(*b));
                    let db = tensor::matmul_tn(&g, self.value(*a));
                    accum(&mut adj, *a, da);
                    accum(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    accum(&mut adj, *b, g.clone());
                    accum(&mut adj, *a, g);
                }
                Op::AddRow(x, bias) => {
                    let mut db = Mat::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accum(&mut adj, *bias, db);
                    accum(&mut adj, *x, g);
                }
                Op::Scale(x, s) => {
                    let s = *s;
                    accum(&mut adj, *x, g.map(|v| v * s));
                }
                Op::MaskedSoftmax(x) => {
                    let p = self.nodes[idx].value.as_ref().expect("softmax value");
                    let mut dx = Mat::zeros(p.rows(), p.cols());
                    for r in 0..p.rows() {
                        let inner = tensor::dot(g.row(r), p.row(r));
                        for ((o, pv), gv) in dx.row_mut(r).iter_mut().zip(p.row(r)).zip(g.row(r)) {
                            *o = pv * (gv - inner);
                        }
                    }
                    accum(&mut adj, *x, dx);
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| {
                            let t = (GELU_C * (v + GELU_K * v * v * v)).tanh();
                            let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v);
                            gv * (0.5 * (1.0 + t) + 0.5 * v * dt)
                        })
                        .collect();
                    accum(&mut adj, *x, Mat::from_vec(xv.rows(), xv.cols(), data));
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normed,
                    rstd,
                } => {
                    let gv = self.value(*gain).row(0).to_vec();
                    let (rows, cols) = normed.shape();
                    let mut dgain = Mat::zeros(1, cols);
                    let mut dbias = Mat::zeros(1, cols);
                    let mut dx = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        let gr = g.row(r);
                        let nr = normed.row(r);
                        let dn: Vec<f64> = gr.iter().zip(&gv).map(|(a, b)| a * b).collect();
                        let mean_dn = dn.iter().sum::<f64>() / cols as f64;
                        let mean_dn_n = tensor::dot(&dn, nr) / cols as f64;
                        for c in 0..cols {
                            dgain.data_mut()[c] += gr[c] * nr[c];
                            dbias.data_mut()[c] += gr[c];
                        }
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = rstd[r] * (dn[c] - mean_dn - nr[c] * mean_dn_n);
                        }
                    }
                    accum(&mut adj, *gain, dgain);
                    accum(&mut adj, *bias, dbias);
                    accum(&mut adj, *x, dx);
                }
                Op::ColSlice(x, start) => {
                    let xv = self.value(*x);
                    let mut dx = Mat::zeros(xv.rows(), xv.cols());
                    for r in 0..g.rows() {
                        dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accum(&mut adj, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let width = self.value(p).cols();
                        let mut dp = Mat::zeros(g.rows(), width);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + width]);
                        }
                        offset += width;
                        accum(&mut adj, p, dp);
                    }
                }
                Op::RowSlice(x, start) => {
                    let xv = self.value(*x);
                    let mut dx = Mat::zeros(xv.rows(), xv.cols());
                    for r in 0..g.rows() {
                        dx.row_mut(start + r).copy_from_slice(g.row(r));
                    }
                    accum(&mut adj, *x, dx);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).rows();
                        accum(&mut adj, p, g.select_rows(offset, len));
                        offset += len;
                    }
                }
                Op::Dropout(x, mask) => {
                    let data = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                    accum(&mut adj, *x, Mat::from_vec(g.rows(), g.cols(), data));
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let upstream = g.get(0, 0);
                    let mut dl = probs.map(|p| p * upstream);
                    for (t, &y) in targets.iter().enumerate() {
                        dl.row_mut(t)[y] -= upstream;
                    }
                    accum(&mut adj, *logits, dl);
                }
            }
        }
    }
}

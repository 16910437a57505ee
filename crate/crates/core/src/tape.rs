//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Only the operations the trust model needs are provided. Every node is
//! appended after its inputs, so the recording order is a topological order
//! and the backward pass walks it in reverse exactly once.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub type Index = Arc<[usize]>;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    ScaleRows(Var, Var),
    Gather(Var, Index),
    SliceRows(Var, usize),
    Spmm(Var, Var, Index, Index),
    ScatterAdd(Var, Index),
    SegmentSoftmax(Var, Index),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    SoftmaxCrossEntropy(Var, Index),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by [`Tape::backward`], one slot per recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
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

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Trainable input.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(v, Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "sub shape mismatch");
        let data = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p - q).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Sub(a, b), ng)
    }

    /// Elementwise product of equally shaped matrices.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p * q).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Mul(a, b), ng)
    }

    /// Adds a `1 x c` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (m, r) = (self.value(x), self.value(row));
        assert_eq!((1, m.cols()), r.shape(), "add_row shape mismatch");
        let mut v = m.clone();
        for i in 0..v.rows() {
            for (a, b) in v.row_mut(i).iter_mut().zip(r.as_slice()) {
                *a += b;
            }
        }
        let ng = self.ng(&[x, row]);
        self.push(v, Op::AddRow(x, row), ng)
    }

    /// Multiplies every row of `x` elementwise by a `1 x c` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let (m, r) = (self.value(x), self.value(row));
        assert_eq!((1, m.cols()), r.shape(), "mul_row shape mismatch");
        let mut v = m.clone();
        for i in 0..v.rows() {
            for (a, b) in v.row_mut(i).iter_mut().zip(r.as_slice()) {
                *a *= b;
            }
        }
        let ng = self.ng(&[x, row]);
        self.push(v, Op::MulRow(x, row), ng)
    }

    /// Scales row `i` of `x` by `s[i]`, where `s` is a column vector.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Var {
        let (m, sv) = (self.value(x), self.value(s));
        assert_eq!((m.rows(), 1), sv.shape(), "scale_rows shape mismatch");
        let mut v = m.clone();
        for i in 0..v.rows() {
            let k = sv.as_slice()[i];
            v.row_mut(i).iter_mut().for_each(|a| *a *= k);
        }
        let ng = self.ng(&[x, s]);
        self.push(v, Op::ScaleRows(x, s), ng)
    }

    /// Row `k` of the result is row `idx[k]` of `x`.
    pub fn gather(&mut self, x: Var, idx: Index) -> Var {
        let m = self.value(x);
        let mut v = Matrix::zeros(idx.len(), m.cols());
        for (k, &i) in idx.iter().enumerate() {
            v.row_mut(k).copy_from_slice(m.row(i));
        }
        let ng = self.ng(&[x]);
        self.push(v, Op::Gather(x, idx), ng)
    }

    /// Rows `start..start + len` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.value(x);
        assert!(start + len <= m.rows(), "slice_rows out of range");
        let c = m.cols();
        let v = Matrix::from_vec(len, c, m.as_slice()[start * c..(start + len) * c].to_vec());
        let ng = self.ng(&[x]);
        self.push(v, Op::SliceRows(x, start), ng)
    }

    /// Sparse aggregation: `out[dst[k]] += w[k] * x[src[k]]` over an
    /// `n x c` result, with `w` an `m x 1` column of edge weights.
    pub fn spmm(&mut self, x: Var, w: Var, dst: Index, src: Index, n: usize) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        assert_eq!(dst.len(), src.len(), "spmm index lengths");
        assert_eq!((dst.len(), 1), wv.shape(), "spmm weight shape");
        let mut v = Matrix::zeros(n, xv.cols());
        for (k, (&i, &j)) in dst.iter().zip(src.iter()).enumerate() {
            let wk = wv.as_slice()[k];
            if wk == 0.0 {
                continue;
            }
            for (a, b) in v.row_mut(i).iter_mut().zip(xv.row(j)) {
                *a += wk * b;
            }
        }
        let ng = self.ng(&[x, w]);
        self.push(v, Op::Spmm(x, w, dst, src), ng)
    }

    /// Sums row `k` of `x` into row `idx[k]` of an `n x c` result.
    pub fn scatter_add(&mut self, x: Var, idx: Index, n: usize) -> Var {
        let m = self.value(x);
        assert_eq!(m.rows(), idx.len(), "scatter_add index length");
        let mut v = Matrix::zeros(n, m.cols());
        for (k, &i) in idx.iter().enumerate() {
            for (a, b) in v.row_mut(i).iter_mut().zip(m.row(k)) {
                *a += b;
            }
        }
        let ng = self.ng(&[x]);
        self.push(v, Op::ScatterAdd(x, idx), ng)
    }

    /// Softmax of a column vector within groups sharing the same `seg` id.
    pub fn segment_softmax(&mut self, x: Var, seg: Index, num_segments: usize) -> Var {
        let m = self.value(x);
        assert_eq!((seg.len(), 1), m.shape(), "segment_softmax expects a column");
        let xs = m.as_slice();
        let mut mx = vec![f64::NEG_INFINITY; num_segments];
        for (k, &s) in seg.iter().enumerate() {
            mx[s] = mx[s].max(xs[k]);
        }
        let mut e: Vec<f64> = seg.iter().enumerate().map(|(k, &s)| (xs[k] - mx[s]).exp()).collect();
        let mut tot = vec![0.0; num_segments];
        for (k, &s) in seg.iter().enumerate() {
            tot[s] += e[k];
        }
        for (k, &s) in seg.iter().enumerate() {
            e[k] /= tot[s];
        }
        let v = Matrix::from_vec(seg.len(), 1, e);
        let ng = self.ng(&[x]);
        self.push(v, Op::SegmentSoftmax(x, seg), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut v = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                let m = self.value(*p);
                assert_eq!(m.rows(), rows, "concat_cols row mismatch");
                v.row_mut(i)[off..off + m.cols()].copy_from_slice(m.row(i));
                off += m.cols();
            }
        }
        let ng = self.ng(parts);
        self.push(v, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(m.as_slice());
            rows += m.rows();
        }
        let ng = self.ng(parts);
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let v = self.value(x).map(|a| leaky(a, slope));
        let ng = self.ng(&[x]);
        self.push(v, Op::LeakyRelu(x, slope), ng)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(elu);
        let ng = self.ng(&[x]);
        self.push(v, Op::Elu(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        let ng = self.ng(&[x]);
        self.push(v, Op::Sigmoid(x), ng)
    }

    /// Mean negative log-likelihood of `labels` under a row-wise softmax of
    /// `logits`. Returns a `1 x 1` value.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Index) -> Var {
        let m = self.value(logits);
        assert_eq!(m.rows(), labels.len(), "one label per row");
        assert!(m.rows() > 0, "empty batch");
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = m.row(i);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        let v = Matrix::scalar(total / labels.len() as f64);
        let ng = self.ng(&[logits]);
        self.push(v, Op::SoftmaxCrossEntropy(logits, labels), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Matrix::scalar(self.value(x).as_slice().iter().sum());
        let ng = self.ng(&[x]);
        self.push(v, Op::Sum(x), ng)
    }

    /// Reverse pass from `output`, seeded with ones. A tape supports a single
    /// backward pass.
    pub fn backward(&mut self, output: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeReused);
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Matrix>> = vec![None; n];
        let out = &self.nodes[output.0].value;
        grads[output.0] = Some(Matrix::from_vec(out.rows(), out.cols(), vec![1.0; out.len()]));

        for id in (0..=output.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if !node.needs_grad {
                grads[id] = Some(g);
                continue;
            }
            let nodes = &self.nodes;
            let acc = |v: Var, delta: Matrix, grads: &mut Vec<Option<Matrix>>| {
                if !nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            let val = |v: Var| &nodes[v.0].value;

            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_t(val(*b)), &mut grads);
                    acc(*b, val(*a).t_matmul(&g), &mut grads);
                }
                Op::MatMulT(a, b) => {
                    acc(*a, g.matmul(val(*b)), &mut grads);
                    acc(*b, g.t_matmul(val(*a)), &mut grads);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g.clone(), &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g.map(|v| -v), &mut grads);
                }
                Op::Mul(a, b) => {
                    let ga = hadamard(&g, val(*b));
                    let gb = hadamard(&g, val(*a));
                    acc(*a, ga, &mut grads);
                    acc(*b, gb, &mut grads);
                }
                Op::AddRow(x, r) => {
                    acc(*x, g.clone(), &mut grads);
                    acc(*r, col_sums(&g), &mut grads);
                }
                Op::MulRow(x, r) => {
                    let rv = val(*r);
                    let mut gx = g.clone();
                    for i in 0..gx.rows() {
                        for (a, b) in gx.row_mut(i).iter_mut().zip(rv.as_slice()) {
                            *a *= b;
                        }
                    }
                    acc(*x, gx, &mut grads);
                    acc(*r, col_sums(&hadamard(&g, val(*x))), &mut grads);
                }
                Op::ScaleRows(x, s) => {
                    let (xv, sv) = (val(*x), val(*s));
                    let mut gx = g.clone();
                    let mut gs = Matrix::zeros(sv.rows(), 1);
                    for i in 0..gx.rows() {
                        let k = sv.as_slice()[i];
                        gs.as_mut_slice()[i] = g.row(i).iter().zip(xv.row(i)).map(|(p, q)| p * q).sum();
                        gx.row_mut(i).iter_mut().for_each(|a| *a *= k);
                    }
                    acc(*x, gx, &mut grads);
                    acc(*s, gs, &mut grads);
                }
                Op::Gather(x, idx) => {
                    let xv = val(*x);
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        for (a, b) in gx.row_mut(i).iter_mut().zip(g.row(k)) {
                            *a += b;
                        }
                    }
                    acc(*x, gx, &mut grads);
                }
                Op::SliceRows(x, start) => {
                    let xv = val(*x);
                    let c = xv.cols();
                    let mut gx = Matrix::zeros(xv.rows(), c);
                    gx.as_mut_slice()[start * c..start * c + g.len()].copy_from_slice(g.as_slice());
                    acc(*x, gx, &mut grads);
                }
                Op::Spmm(x, w, dst, src) => {
                    let (xv, wv) = (val(*x), val(*w));
                    if nodes[x.0].needs_grad {
                        let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                        for (k, (&i, &j)) in dst.iter().zip(src.iter()).enumerate() {
                            let wk = wv.as_slice()[k];
                            for (a, b) in gx.row_mut(j).iter_mut().zip(g.row(i)) {
                                *a += wk * b;
                            }
                        }
                        acc(*x, gx, &mut grads);
                    }
                    if nodes[w.0].needs_grad {
                        let gw = dst
                            .iter()
                            .zip(src.iter())
                            .map(|(&i, &j)| g.row(i).iter().zip(xv.row(j)).map(|(p, q)| p * q).sum())
                            .collect();
                        acc(*w, Matrix::from_vec(dst.len(), 1, gw), &mut grads);
                    }
                }
                Op::ScatterAdd(x, idx) => {
                    let mut gx = Matrix::zeros(idx.len(), g.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        gx.row_mut(k).copy_from_slice(g.row(i));
                    }
                    acc(*x, gx, &mut grads);
                }
                Op::SegmentSoftmax(x, seg) => {
                    let y = node.value.as_slice();
                    let gy = g.as_slice();
                    let nseg = seg.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; nseg];
                    for (k, &s) in seg.iter().enumerate() {
                        dot[s] += y[k] * gy[k];
                    }
                    let gx = seg.iter().enumerate().map(|(k, &s)| y[k] * (gy[k] - dot[s])).collect();
                    acc(*x, Matrix::from_vec(seg.len(), 1, gx), &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let c = val(*p).cols();
                        let mut gp = Matrix::zeros(g.rows(), c);
                        for i in 0..g.rows() {
                            gp.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                        }
                        off += c;
                        acc(*p, gp, &mut grads);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (r, c) = val(*p).shape();
                        let gp = Matrix::from_vec(r, c, g.as_slice()[off * c..(off + r) * c].to_vec());
                        off += r;
                        acc(*p, gp, &mut grads);
                    }
                }
                Op::LeakyRelu(x, slope) => {
                    let xv = val(*x);
                    let data = g
                        .as_slice()
                        .iter()
                        .zip(xv.as_slice())
                        .map(|(&d, &a)| if a > 0.0 { d } else { slope * d })
                        .collect();
                    acc(*x, Matrix::from_vec(g.rows(), g.cols(), data), &mut grads);
                }
                Op::Elu(x) => {
                    let xv = val(*x);
                    let data = g
                        .as_slice()
                        .iter()
                        .zip(xv.as_slice())
                        .map(|(&d, &a)| if a > 0.0 { d } else { d * a.exp() })
                        .collect();
                    acc(*x, Matrix::from_vec(g.rows(), g.cols(), data), &mut grads);
                }
                Op::Sigmoid(x) => {
                    let data = g
                        .as_slice()
                        .iter()
                        .zip(node.value.as_slice())
                        .map(|(&d, &s)| d * s * (1.0 - s))
                        .collect();
                    acc(*x, Matrix::from_vec(g.rows(), g.cols(), data), &mut grads);
                }
                Op::SoftmaxCrossEntropy(logits, labels) => {
                    let lv = val(*logits);
                    let scale = g.as_slice()[0] / labels.len() as f64;
                    let mut gl = Matrix::zeros(lv.rows(), lv.cols());
                    for (i, &y) in labels.iter().enumerate() {
                        let p = softmax_row(lv.row(i));
                        for (j, pj) in p.into_iter().enumerate() {
                            let t = if j == y { 1.0 } else { 0.0 };
                            gl[(i, j)] = scale * (pj - t);
                        }
                    }
                    acc(*logits, gl, &mut grads);
                }
                Op::Sum(x) => {
                    let (r, c) = val(*x).shape();
                    acc(*x, Matrix::from_vec(r, c, vec![g.as_slice()[0]; r * c]), &mut grads);
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

fn col_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for i in 0..g.rows() {
        for (a, b) in out.as_mut_slice().iter_mut().zip(g.row(i)) {
            *a += b;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference gradient of `f` at `x`.
    fn numeric(x: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-6;
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for k in 0..x.len() {
            let mut p = x.clone();
            p.as_mut_slice()[k] += h;
            let mut m = x.clone();
            m.as_mut_slice()[k] -= h;
            out.as_mut_slice()[k] = (f(&p) - f(&m)) / (2.0 * h);
        }
        out
    }

    fn check(x: Matrix, build: impl Fn(&mut Tape, Var) -> Var) {
        let f = |m: &Matrix| {
            let mut t = Tape::new();
            let v = t.param(m.clone());
            let out = build(&mut t, v);
            let s = t.sum(out);
            t.value(s)[(0, 0)]
        };
        let mut t = Tape::new();
        let v = t.param(x.clone());
        let out = build(&mut t, v);
        let s = t.sum(out);
        let g = t.backward(s).unwrap().get(v);
        let n = numeric(&x, f);
        assert!(g.max_abs_diff(&n) < 1e-6, "analytic {g:?} vs numeric {n:?}");
    }

    fn sample(r: usize, c: usize, off: f64) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|k| ((k as f64 + off) * 0.7).sin()).collect())
    }

    #[test]
    fn quadratic() {
        let mut t = Tape::new();
        let w = t.param(Matrix::scalar(3.0));
        let sq = t.mul(w, w);
        let g = t.backward(sq).unwrap();
        assert_eq!(g.get(w)[(0, 0)], 6.0);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut t = Tape::new();
        let w = t.param(Matrix::from_vec(1, 2, vec![1.0, 2.0]));
        let c = t.constant(Matrix::scalar(4.0));
        let loss = t.mul(c, c);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w), Matrix::zeros(1, 2));
    }

    #[test]
    fn reuse_is_an_error() {
        let mut t = Tape::new();
        let w = t.param(Matrix::scalar(1.0));
        t.backward(w).unwrap();
        assert!(matches!(t.backward(w), Err(Error::TapeReused)));
    }

    #[test]
    fn op_gradients() {
        let b = sample(3, 2, 5.0);
        check(sample(4, 3, 0.0), |t, x| {
            let c = t.constant(b.clone());
            t.matmul(x, c)
        });
        check(sample(3, 2, 0.0), |t, x| {
            let c = t.constant(b.clone());
            let y = t.matmul_t(c, x);
            let z = t.matmul_t(x, c);
            let w = t.matmul(y, z);
            t.mul(w, w)
        });
        check(sample(3, 4, 0.0), |t, x| {
            let c = t.constant(sample(4, 3, 1.0));
            let y = t.matmul(c, x);
            t.mul(y, y)
        });
        check(sample(4, 3, 0.5), |t, x| t.leaky_relu(x, 0.2));
        check(sample(4, 3, 0.5), |t, x| t.elu(x));
        check(sample(4, 3, 0.5), |t, x| {
            let s = t.sigmoid(x);
            t.mul(s, x)
        });
        check(sample(1, 3, 0.5), |t, r| {
            let c = t.constant(sample(4, 3, 2.0));
            let a = t.mul_row(c, r);
            let b = t.add_row(a, r);
            t.mul(b, b)
        });
        check(sample(4, 1, 0.5), |t, s| {
            let c = t.constant(sample(4, 3, 2.0));
            let y = t.scale_rows(c, s);
            t.mul(y, y)
        });
        let idx: Index = Arc::from(vec![2usize, 0, 2, 1]);
        check(sample(3, 2, 0.5), |t, x| {
            let y = t.gather(x, idx.clone());
            let z = t.scatter_add(y, Arc::from(vec![1usize, 1, 0, 2]), 3);
            t.mul(z, z)
        });
        let dst: Index = Arc::from(vec![0usize, 0, 2, 1, 2]);
        let src: Index = Arc::from(vec![1usize, 0, 0, 2, 2]);
        let xs = sample(3, 2, 4.0);
        check(sample(5, 1, 0.5), |t, w| {
            let x = t.constant(xs.clone());
            let y = t.spmm(x, w, dst.clone(), src.clone(), 3);
            t.mul(y, y)
        });
        let ws = sample(5, 1, 1.5);
        check(xs.clone(), |t, x| {
            let w = t.constant(ws.clone());
            let y = t.spmm(x, w, dst.clone(), src.clone(), 3);
            let z = t.slice_rows(y, 1, 2);
            t.mul(z, z)
        });
        let seg: Index = Arc::from(vec![0usize, 1, 0, 0, 1]);
        check(sample(5, 1, 0.5), |t, x| {
            let y = t.segment_softmax(x, seg.clone(), 2);
            let w = t.constant(sample(5, 1, 3.0));
            t.mul(y, w)
        });
        check(sample(2, 2, 0.5), |t, x| {
            let c = t.constant(sample(2, 1, 1.0));
            let y = t.concat_cols(&[x, c, x]);
            let z = t.concat_rows(&[y, y]);
            t.mul(z, z)
        });
        check(sample(4, 2, 0.5), |t, x| {
            let d = t.sub(x, x);
            let e = t.add(d, x);
            t.softmax_cross_entropy(e, Arc::from(vec![0usize, 1, 1, 0]))
        });
    }

    #[test]
    fn segment_softmax_normalizes() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::from_vec(4, 1, vec![1.0, -2.0, 30.0, 0.5]));
        let y = t.segment_softmax(x, Arc::from(vec![0usize, 0, 1, 1]), 2);
        let v = t.value(y).as_slice();
        assert!((v[0] + v[1] - 1.0).abs() < 1e-15);
        assert!((v[2] + v[3] - 1.0).abs() < 1e-15);
    }
}

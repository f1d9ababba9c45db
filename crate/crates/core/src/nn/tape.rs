//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Every operation appends a node holding its value, so node order is a
//! topological order and the backward pass is a single reverse sweep.

use std::collections::HashMap;

use super::matrix::{gemm, Matrix};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    /// `x · wᵀ + b` with `x: n×in`, `w: out×in`, `b: 1×out`, plus `h · uᵀ` when `rec` is set.
    Affine {
        x: Var,
        w: Var,
        b: Option<Var>,
        rec: Option<(Var, Var)>,
    },
    /// LSTM cell state from `n×4h` gate pre-activations (order i, f, g, o);
    /// `acts` caches the activated gates.
    LstmCell {
        gates: Var,
        c_prev: Option<Var>,
        acts: Matrix,
    },
    /// `h = o · tanh(c)` for the cell node `cell`; `tc` caches `tanh(c)`.
    LstmHidden {
        cell: Var,
        gates: Var,
        tc: Matrix,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Square(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    BroadcastRows(Var),
    BroadcastCols(Var),
    RowMean(Var),
    LogSoftmax(Var),
    Pick {
        x: Var,
        idx: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Records a computation for one backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data[0]
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(Op::Constant, m)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(Op::Param(id), store.matrix(id));
        self.params.insert(id, v);
        v
    }

    /// Copy of `v`'s value with no gradient path back to it.
    pub fn detach(&mut self, v: Var) -> Var {
        let m = self.value(v).clone();
        self.constant(m)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        self.affine_impl(x, w, b, None)
    }

    /// `x · wᵀ + h · uᵀ + b` as one node.
    pub fn affine2(&mut self, x: Var, w: Var, h: Var, u: Var, b: Option<Var>) -> Var {
        self.affine_impl(x, w, b, Some((h, u)))
    }

    fn affine_impl(&mut self, x: Var, w: Var, b: Option<Var>, rec: Option<(Var, Var)>) -> Var {
        let (n, inp) = self.value(x).shape();
        let (out, w_in) = self.value(w).shape();
        assert_eq!(inp, w_in, "affine: input width {inp} vs weight width {w_in}");
        let mut y = Matrix::zeros(n, out);
        if let Some(b) = b {
            let bv = self.value(b);
            assert_eq!(bv.shape(), (1, out), "affine: bias shape");
            for r in 0..n {
                y.data[r * out..(r + 1) * out].copy_from_slice(&bv.data);
            }
        }
        gemm(
            n,
            inp,
            out,
            1.0,
            &self.value(x).data,
            false,
            &self.value(w).data,
            true,
            1.0,
            &mut y.data,
        );
        if let Some((h, u)) = rec {
            let (hn, hin) = self.value(h).shape();
            assert_eq!((hn, self.value(u).shape()), (n, (out, hin)), "affine: recurrent shapes");
            gemm(
                n,
                hin,
                out,
                1.0,
                &self.value(h).data,
                false,
                &self.value(u).data,
                true,
                1.0,
                &mut y.data,
            );
        }
        self.push(Op::Affine { x, w, b, rec }, y)
    }

    /// LSTM cell update from gate pre-activations `gates` (`n×4h`, order
    /// i, f, g, o). Returns `(h, c)`. Without `c_prev` the forget gate is unused.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Option<Var>) -> (Var, Var) {
        let gv = self.value(gates);
        let (n, four_h) = gv.shape();
        assert_eq!(four_h % 4, 0, "lstm_cell: gate width must be a multiple of 4");
        let h = four_h / 4;
        let mut acts = Matrix::zeros(n, four_h);
        let mut c = Matrix::zeros(n, h);
        let cp = c_prev.map(|v| self.value(v));
        for r in 0..n {
            let pre = gv.row(r);
            let a = &mut acts.data[r * four_h..(r + 1) * four_h];
            for k in 0..h {
                let i = sigmoid(pre[k]);
                let g = pre[2 * h + k].tanh();
                let mut ck = i * g;
                if let Some(cp) = cp {
                    let f = sigmoid(pre[h + k]);
                    a[h + k] = f;
                    ck += f * cp.data[r * h + k];
                }
                a[k] = i;
                a[2 * h + k] = g;
                a[3 * h + k] = sigmoid(pre[3 * h + k]);
                c.data[r * h + k] = ck;
            }
        }
        let tc = c.map(f64::tanh);
        let hv = Matrix::from_vec(
            n,
            h,
            (0..n * h)
                .map(|j| acts.data[(j / h) * four_h + 3 * h + j % h] * tc.data[j])
                .collect(),
        );
        let cell = self.push(Op::LstmCell { gates, c_prev, acts }, c);
        let hid = self.push(Op::LstmHidden { cell, gates, tc }, hv);
        (hid, cell)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), y)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let y = self.value(a).map(|x| k * x);
        self.push(Op::Scale(a, k), y)
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let y = self.value(a).map(|x| x + c);
        self.push(Op::Offset(a), y)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), y)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), y)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let y = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu(a, slope), y)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let y = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), y)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let y = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), y)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols, "slice out of range");
        let mut y = Matrix::zeros(xv.rows, len);
        for r in 0..xv.rows {
            y.data[r * len..(r + 1) * len].copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols { x, start }, y)
    }

    /// Repeats a `1×m` row `n` times.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows, 1, "broadcast_rows expects a single row");
        let mut y = Matrix::zeros(n, av.cols);
        for r in 0..n {
            y.data[r * av.cols..(r + 1) * av.cols].copy_from_slice(&av.data);
        }
        self.push(Op::BroadcastRows(a), y)
    }

    /// Repeats an `n×1` column `m` times.
    pub fn broadcast_cols(&mut self, a: Var, m: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.cols, 1, "broadcast_cols expects a single column");
        let mut y = Matrix::zeros(av.rows, m);
        for r in 0..av.rows {
            y.data[r * m..(r + 1) * m].fill(av.data[r]);
        }
        self.push(Op::BroadcastCols(a), y)
    }

    pub fn row_mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let y = Matrix::from_vec(
            av.rows,
            1,
            (0..av.rows)
                .map(|r| av.row(r).iter().sum::<f64>() / av.cols as f64)
                .collect(),
        );
        self.push(Op::RowMean(a), y)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut y = av.clone();
        for r in 0..av.rows {
            let row = av.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for (out, v) in y.data[r * av.cols..(r + 1) * av.cols].iter_mut().zip(row) {
                *out = v - lse;
            }
        }
        self.push(Op::LogSoftmax(a), y)
    }

    /// `out[r] = x[r, idx[r]]`, an `n×1` column.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.rows, idx.len(), "pick: one index per row");
        let y = Matrix::from_vec(xv.rows, 1, idx.iter().enumerate().map(|(r, &c)| xv.get(r, c)).collect());
        self.push(Op::Pick { x, idx: idx.to_vec() }, y)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Op::Sum(a), Matrix::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let s = av.data.iter().sum::<f64>() / av.data.len() as f64;
        self.push(Op::Mean(a), Matrix::scalar(s))
    }

    /// Gradients of the scalar `loss` with respect to every parameter of
    /// `store`, in the store's layout. Parameters not on a path to `loss`
    /// get zero gradients.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<ParamStore> {
        if self.nodes.is_empty() {
            return Err(Error::TapeEmpty);
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::ShapeMismatch(format!(
                "loss must be 1x1, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads = store.zeros_like();
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(d) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let g = grads.values_mut(*id);
                    for (a, b) in g.iter_mut().zip(&d.data) {
                        *a += b;
                    }
                }
                Op::Affine { x, w, b, rec } => {
                    let pairs = std::iter::once((*x, *w)).chain(*rec);
                    let (n, out) = d.shape();
                    for (x, w) in pairs {
                        let xv = self.value(x);
                        let wv = self.value(w);
                        let inp = xv.cols;
                        if !matches!(self.nodes[x.0].op, Op::Constant) {
                            let dx = accum(&mut adj, x, n, inp);
                            gemm(n, out, inp, 1.0, &d.data, false, &wv.data, false, 1.0, &mut dx.data);
                        }
                        let dw = accum(&mut adj, w, out, inp);
                        gemm(out, n, inp, 1.0, &d.data, true, &xv.data, false, 1.0, &mut dw.data);
                    }
                    if let Some(b) = b {
                        let db = accum(&mut adj, *b, 1, out);
                        for r in 0..n {
                            for (a, g) in db.data.iter_mut().zip(d.row(r)) {
                                *a += g;
                            }
                        }
                    }
                }
                Op::LstmHidden { cell, gates, tc } => {
                    let Op::LstmCell { acts, .. } = &self.nodes[cell.0].op else {
                        unreachable!("LstmHidden always follows its cell")
                    };
                    let (n, h) = d.shape();
                    let dc = accum(&mut adj, *cell, n, h);
                    for j in 0..n * h {
                        let o = acts.data[(j / h) * 4 * h + 3 * h + j % h];
                        dc.data[j] += d.data[j] * o * (1.0 - tc.data[j] * tc.data[j]);
                    }
                    let dg = accum(&mut adj, *gates, n, 4 * h);
                    for j in 0..n * h {
                        let k = (j / h) * 4 * h + 3 * h + j % h;
                        let o = acts.data[k];
                        dg.data[k] += d.data[j] * tc.data[j] * o * (1.0 - o);
                    }
                }
                Op::LstmCell { gates, c_prev, acts } => {
                    let (n, h) = d.shape();
                    let dg = accum(&mut adj, *gates, n, 4 * h);
                    for r in 0..n {
                        let a = &acts.data[r * 4 * h..(r + 1) * 4 * h];
                        let g = &mut dg.data[r * 4 * h..(r + 1) * 4 * h];
                        for k in 0..h {
                            let dc = d.data[r * h + k];
                            let (i, gg) = (a[k], a[2 * h + k]);
                            g[k] += dc * gg * i * (1.0 - i);
                            g[2 * h + k] += dc * i * (1.0 - gg * gg);
                        }
                    }
                    if let Some(cp) = c_prev {
                        let cpv = &self.value(*cp).data;
                        for r in 0..n {
                            let a = &acts.data[r * 4 * h..(r + 1) * 4 * h];
                            let g = &mut dg.data[r * 4 * h..(r + 1) * 4 * h];
                            for k in 0..h {
                                let f = a[h + k];
                                g[h + k] += d.data[r * h + k] * cpv[r * h + k] * f * (1.0 - f);
                            }
                        }
                        let dcp = accum(&mut adj, *cp, n, h);
                        for r in 0..n {
                            for k in 0..h {
                                dcp.data[r * h + k] += d.data[r * h + k] * acts.data[r * 4 * h + h + k];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(&mut adj, *a, &d, 1.0);
                    add_into(&mut adj, *b, &d, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(&mut adj, *a, &d, 1.0);
                    add_into(&mut adj, *b, &d, -1.0);
                }
                Op::Mul(a, b) => {
                    let da = d.zip_map(self.value(*b), |g, v| g * v);
                    let db = d.zip_map(self.value(*a), |g, v| g * v);
                    add_into(&mut adj, *a, &da, 1.0);
                    add_into(&mut adj, *b, &db, 1.0);
                }
                Op::Scale(a, k) => add_into(&mut adj, *a, &d, *k),
                Op::Offset(a) => add_into(&mut adj, *a, &d, 1.0),
                Op::Sigmoid(a) => {
                    let g = d.zip_map(y, |g, s| g * s * (1.0 - s));
                    add_into(&mut adj, *a, &g, 1.0);
                }
                Op::Tanh(a) => {
                    let g = d.zip_map(y, |g, t| g * (1.0 - t * t));
                    add_into(&mut adj, *a, &g, 1.0);
                }
                Op::LeakyRelu(a, slope) => {
                    let g = d.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { slope * g });
                    add_into(&mut adj, *a, &g, 1.0);
                }
                Op::Exp(a) => {
                    let g = d.zip_map(y, |g, e| g * e);
                    add_into(&mut adj, *a, &g, 1.0);
                }
                Op::Square(a) => {
                    let g = d.zip_map(self.value(*a), |g, x| 2.0 * g * x);
                    add_into(&mut adj, *a, &g, 1.0);
                }
                Op::SliceCols { x, start } => {
                    let (n, cols) = self.value(*x).shape();
                    let len = y.cols;
                    let dx = accum(&mut adj, *x, n, cols);
                    for r in 0..n {
                        for c in 0..len {
                            dx.data[r * cols + start + c] += d.data[r * len + c];
                        }
                    }
                }
                Op::BroadcastRows(a) => {
                    let m = y.cols;
                    let da = accum(&mut adj, *a, 1, m);
                    for r in 0..y.rows {
                        for (acc, g) in da.data.iter_mut().zip(d.row(r)) {
                            *acc += g;
                        }
                    }
                }
                Op::BroadcastCols(a) => {
                    let da = accum(&mut adj, *a, y.rows, 1);
                    for r in 0..y.rows {
                        da.data[r] += d.row(r).iter().sum::<f64>();
                    }
                }
                Op::RowMean(a) => {
                    let (n, m) = self.value(*a).shape();
                    let da = accum(&mut adj, *a, n, m);
                    for r in 0..n {
                        let g = d.data[r] / m as f64;
                        da.data[r * m..(r + 1) * m].iter_mut().for_each(|v| *v += g);
                    }
                }
                Op::LogSoftmax(a) => {
                    let (n, m) = y.shape();
                    let da = accum(&mut adj, *a, n, m);
                    for r in 0..n {
                        let gs: f64 = d.row(r).iter().sum();
                        for c in 0..m {
                            let k = r * m + c;
                            da.data[k] += d.data[k] - y.data[k].exp() * gs;
                        }
                    }
                }
                Op::Pick { x, idx } => {
                    let (n, m) = self.value(*x).shape();
                    let dx = accum(&mut adj, *x, n, m);
                    for (r, &c) in idx.iter().enumerate() {
                        dx.data[r * m + c] += d.data[r];
                    }
                }
                Op::Sum(a) => {
                    let g = d.data[0];
                    let (n, m) = self.value(*a).shape();
                    accum(&mut adj, *a, n, m).data.iter_mut().for_each(|v| *v += g);
                }
                Op::Mean(a) => {
                    let (n, m) = self.value(*a).shape();
                    let g = d.data[0] / (n * m) as f64;
                    accum(&mut adj, *a, n, m).data.iter_mut().for_each(|v| *v += g);
                }
            }
        }
        Ok(grads)
    }
}

fn accum(adj: &mut [Option<Matrix>], v: Var, rows: usize, cols: usize) -> &mut Matrix {
    adj[v.0].get_or_insert_with(|| Matrix::zeros(rows, cols))
}

fn add_into(adj: &mut [Option<Matrix>], v: Var, g: &Matrix, k: f64) {
    match &mut adj[v.0] {
        Some(m) => {
            for (a, b) in m.data.iter_mut().zip(&g.data) {
                *a += k * b;
            }
        }
        slot @ None => {
            *slot = Some(if k == 1.0 { g.clone() } else { g.map(|x| k * x) });
        }
    }
}

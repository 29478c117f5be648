//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its forward value. Parameters enter
//! the tape through [`Tape::param`] with a slot index, and
//! [`Tape::backward`] accumulates their gradients into a [`Gradients`]
//! buffer aligned with those slots.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Pool {
    #[default]
    Mean,
    Max,
    Min,
}

#[derive(Debug)]
enum Op {
    Const,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ColAffine {
        x: Var,
        scale: Rc<[f64]>,
    },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    GatherRows(Var, Rc<[usize]>),
    ScatterAddRows(Var, Rc<[usize]>),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    /// Per output entry, the contributing input rows (one for max/min).
    SegmentPool {
        x: Var,
        segments: Rc<[Vec<usize>]>,
        pool: Pool,
        arg: Vec<usize>,
    },
    Sum(Var),
    MeanRows(Var),
    LogSoftmaxPick {
        x: Var,
        probs: Vec<f64>,
        pick: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradient buffers aligned with parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub slots: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros(shapes: impl IntoIterator<Item = [usize; 2]>) -> Self {
        Self {
            slots: shapes.into_iter().map(|[r, c]| Tensor::zeros(r, c)).collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.slots.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.slots.iter_mut().for_each(|t| t.scale_assign(s));
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().all(Tensor::is_finite)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    non_finite: Option<&'static str>,
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

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some(name);
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Fails if any forward value so far contained NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.non_finite {
            None => Ok(()),
            Some(op) => Err(Error::NonFinite(format!("forward pass ({op})"))),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Const, "constant")
    }

    pub fn param(&mut self, slot: usize, value: &Tensor) -> Var {
        self.push(value.clone(), Op::Param(slot), "param")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::from_vec(x.rows(), x.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a, b), "mul")
    }

    /// Adds the `1 x c` row vector `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!(r.shape(), [1, x.cols()], "add_row shape mismatch");
        let mut v = x.clone();
        for i in 0..v.rows() {
            for (o, b) in v.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(v, Op::AddRow(a, row), "add_row")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), "scale")
    }

    /// Column-wise `(x - shift) * scale` with constant `shift` and `scale`.
    pub fn col_affine(&mut self, x: Var, shift: &[f64], scale: Rc<[f64]>) -> Var {
        let t = self.value(x);
        assert_eq!(t.cols(), scale.len(), "col_affine width mismatch");
        let mut v = t.clone();
        for i in 0..v.rows() {
            for ((o, s), m) in v.row_mut(i).iter_mut().zip(scale.iter()).zip(shift) {
                *o = (*o - m) * s;
            }
        }
        self.push(v, Op::ColAffine { x, scale }, "col_affine")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), "relu")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a), "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a), "sigmoid")
    }

    pub fn gather_rows(&mut self, a: Var, idx: Rc<[usize]>) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            data.extend_from_slice(x.row(i));
        }
        let v = Tensor::from_vec(idx.len(), c, data);
        self.push(v, Op::GatherRows(a, idx), "gather_rows")
    }

    /// Sums row `e` of `a` into output row `idx[e]` of an `out_rows x c` result.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Rc<[usize]>, out_rows: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows(), idx.len(), "scatter index length mismatch");
        let mut v = Tensor::zeros(out_rows, x.cols());
        for (e, &i) in idx.iter().enumerate() {
            for (o, s) in v.row_mut(i).iter_mut().zip(x.row(e)) {
                *o += s;
            }
        }
        self.push(v, Op::ScatterAddRows(a, idx), "scatter_add_rows")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.rows(), y.rows(), "concat_cols row mismatch");
        let mut data = Vec::with_capacity(x.len() + y.len());
        for i in 0..x.rows() {
            data.extend_from_slice(x.row(i));
            data.extend_from_slice(y.row(i));
        }
        let v = Tensor::from_vec(x.rows(), x.cols() + y.cols(), data);
        self.push(v, Op::ConcatCols(a, b), "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let v = Tensor::from_vec(rows, cols, data);
        self.push(v, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        let mut data = Vec::with_capacity(x.rows() * len);
        for i in 0..x.rows() {
            data.extend_from_slice(&x.row(i)[start..start + len]);
        }
        let v = Tensor::from_vec(x.rows(), len, data);
        self.push(v, Op::SliceCols(a, start), "slice_cols")
    }

    /// One output row per segment, pooling the listed input rows.
    pub fn segment_pool(&mut self, x: Var, segments: Rc<[Vec<usize>]>, pool: Pool) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let mut v = Tensor::zeros(segments.len(), c);
        let mut arg = Vec::new();
        for (s, rows) in segments.iter().enumerate() {
            assert!(!rows.is_empty(), "empty pooling segment");
            let out = v.row_mut(s);
            match pool {
                Pool::Mean => {
                    for &r in rows {
                        for (o, val) in out.iter_mut().zip(t.row(r)) {
                            *o += val;
                        }
                    }
                    let inv = 1.0 / rows.len() as f64;
                    out.iter_mut().for_each(|o| *o *= inv);
                }
                Pool::Max | Pool::Min => {
                    for (col, o) in out.iter_mut().enumerate() {
                        let mut best = rows[0];
                        for &r in &rows[1..] {
                            let (cand, cur) = (t.get(r, col), t.get(best, col));
                            let better = if pool == Pool::Max { cand > cur } else { cand < cur };
                            if better {
                                best = r;
                            }
                        }
                        *o = t.get(best, col);
                        arg.push(best);
                    }
                }
            }
        }
        self.push(
            v,
            Op::SegmentPool {
                x,
                segments,
                pool,
                arg,
            },
            "segment_pool",
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(v, Op::Sum(a), "sum")
    }

    /// `1 x c` mean over rows.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = vec![0.0; x.cols()];
        for i in 0..x.rows() {
            for (o, v) in out.iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        let inv = 1.0 / x.rows().max(1) as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        self.push(Tensor::row_vector(out), Op::MeanRows(a), "mean_rows")
    }

    /// Softmax over the unmasked entries of `scores` (all entries, flattened).
    /// Masked entries get probability exactly zero.
    pub fn masked_softmax(scores: &[f64], allowed: &[bool]) -> Vec<f64> {
        let max = scores
            .iter()
            .zip(allowed)
            .filter(|(_, &ok)| ok)
            .fold(f64::NEG_INFINITY, |acc, (&s, _)| acc.max(s));
        let mut probs: Vec<f64> = scores
            .iter()
            .zip(allowed)
            .map(|(&s, &ok)| if ok { (s - max).exp() } else { 0.0 })
            .collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        probs
    }

    /// `log softmax(scores)[pick]` over the unmasked entries. Returns the
    /// node and the full probability vector.
    pub fn log_softmax_pick(&mut self, x: Var, allowed: &[bool], pick: usize) -> (Var, Vec<f64>) {
        let scores = self.value(x).data();
        assert_eq!(scores.len(), allowed.len(), "mask length mismatch");
        assert!(allowed[pick], "picked a masked entry");
        let max = scores
            .iter()
            .zip(allowed)
            .filter(|(_, &ok)| ok)
            .fold(f64::NEG_INFINITY, |acc, (&s, _)| acc.max(s));
        let lse = max
            + scores
                .iter()
                .zip(allowed)
                .filter(|(_, &ok)| ok)
                .map(|(&s, _)| (s - max).exp())
                .sum::<f64>()
                .ln();
        let value = scores[pick] - lse;
        let probs = Self::masked_softmax(scores, allowed);
        let node = self.push(
            Tensor::scalar(value),
            Op::LogSoftmaxPick {
                x,
                probs: probs.clone(),
                pick,
            },
            "log_softmax_pick",
        );
        (node, probs)
    }

    /// Accumulates `seed * d(loss)/d(param)` into `grads`.
    pub fn backward(&self, loss: Var, seed: f64, grads: &mut Gradients) -> Result<()> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut adj: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(seed));
        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            let mut send = |v: Var, t: Tensor| match &mut adj[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Const => {}
                Op::Param(slot) => {
                    let target = grads
                        .slots
                        .get_mut(*slot)
                        .expect("parameter slot out of range");
                    target.add_assign(&g);
                }
                Op::MatMul(a, b) => {
                    send(*a, g.matmul_t(self.value(*b)));
                    send(*b, self.value(*a).t_matmul(&g));
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.map(|v| -v));
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = elementwise(&g, y, |g, y| g * y);
                    let gb = elementwise(&g, x, |g, x| g * x);
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::AddRow(a, row) => {
                    let mut gr = vec![0.0; g.cols()];
                    for i in 0..g.rows() {
                        for (o, v) in gr.iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    send(*row, Tensor::row_vector(gr));
                    send(*a, g);
                }
                Op::Scale(a, s) => send(*a, g.map(|v| v * s)),
                Op::ColAffine { x, scale } => {
                    let mut gx = g;
                    for i in 0..gx.rows() {
                        for (o, s) in gx.row_mut(i).iter_mut().zip(scale.iter()) {
                            *o *= s;
                        }
                    }
                    send(*x, gx);
                }
                Op::Relu(a) => {
                    send(*a, elementwise(&g, &node.value, |g, y| if y > 0.0 { g } else { 0.0 }))
                }
                Op::Tanh(a) => send(*a, elementwise(&g, &node.value, |g, y| g * (1.0 - y * y))),
                Op::Sigmoid(a) => {
                    send(*a, elementwise(&g, &node.value, |g, y| g * y * (1.0 - y)))
                }
                Op::GatherRows(a, idx) => {
                    let src = self.value(*a);
                    let mut gx = Tensor::zeros(src.rows(), src.cols());
                    for (e, &i) in idx.iter().enumerate() {
                        for (o, v) in gx.row_mut(i).iter_mut().zip(g.row(e)) {
                            *o += v;
                        }
                    }
                    send(*a, gx);
                }
                Op::ScatterAddRows(a, idx) => {
                    let mut data = Vec::with_capacity(idx.len() * g.cols());
                    for &i in idx.iter() {
                        data.extend_from_slice(g.row(i));
                    }
                    send(*a, Tensor::from_vec(idx.len(), g.cols(), data));
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut da = Vec::with_capacity(g.rows() * ca);
                    let mut db = Vec::with_capacity(g.rows() * cb);
                    for i in 0..g.rows() {
                        da.extend_from_slice(&g.row(i)[..ca]);
                        db.extend_from_slice(&g.row(i)[ca..]);
                    }
                    send(*a, Tensor::from_vec(g.rows(), ca, da));
                    send(*b, Tensor::from_vec(g.rows(), cb, db));
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let r = self.value(p).rows();
                        let c = g.cols();
                        let data = g.data()[offset * c..(offset + r) * c].to_vec();
                        send(p, Tensor::from_vec(r, c, data));
                        offset += r;
                    }
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut gx = Tensor::zeros(src.rows(), src.cols());
                    for i in 0..g.rows() {
                        gx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    send(*a, gx);
                }
                Op::SegmentPool {
                    x,
                    segments,
                    pool,
                    arg,
                } => {
                    let src = self.value(*x);
                    let c = src.cols();
                    let mut gx = Tensor::zeros(src.rows(), c);
                    for (s, rows) in segments.iter().enumerate() {
                        match pool {
                            Pool::Mean => {
                                let inv = 1.0 / rows.len() as f64;
                                for &r in rows {
                                    for (o, v) in gx.row_mut(r).iter_mut().zip(g.row(s)) {
                                        *o += v * inv;
                                    }
                                }
                            }
                            Pool::Max | Pool::Min => {
                                for col in 0..c {
                                    let r = arg[s * c + col];
                                    gx.row_mut(r)[col] += g.get(s, col);
                                }
                            }
                        }
                    }
                    send(*x, gx);
                }
                Op::Sum(a) => {
                    let src = self.value(*a);
                    let v = g.item();
                    send(*a, Tensor::from_vec(src.rows(), src.cols(), vec![v; src.len()]));
                }
                Op::MeanRows(a) => {
                    let src = self.value(*a);
                    let inv = 1.0 / src.rows().max(1) as f64;
                    let mut gx = Tensor::zeros(src.rows(), src.cols());
                    for i in 0..src.rows() {
                        for (o, v) in gx.row_mut(i).iter_mut().zip(g.data()) {
                            *o = v * inv;
                        }
                    }
                    send(*a, gx);
                }
                Op::LogSoftmaxPick { x, probs, pick } => {
                    let src = self.value(*x);
                    let gv = g.item();
                    let mut data: Vec<f64> = probs.iter().map(|p| -gv * p).collect();
                    data[*pick] += gv;
                    send(*x, Tensor::from_vec(src.rows(), src.cols(), data));
                }
            }
        }
        if grads.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("backward pass".into()))
        }
    }
}

fn elementwise(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = g.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::from_vec(g.rows(), g.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut impl Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Central-difference check of `f` (which maps parameter tensors to a
    /// scalar loss node) against the tape gradient.
    fn check(params: Vec<Tensor>, f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let run = |ps: &[Tensor]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = ps.iter().enumerate().map(|(i, p)| tape.param(i, p)).collect();
            let out = f(&mut tape, &vars);
            (tape, out)
        };
        let (tape, out) = run(&params);
        let mut grads = Gradients::zeros(params.iter().map(Tensor::shape));
        tape.backward(out, 1.0, &mut grads).unwrap();
        let h = 1e-5;
        for (s, p) in params.iter().enumerate() {
            for idx in 0..p.len() {
                let mut plus = params.clone();
                plus[s].data_mut()[idx] += h;
                let mut minus = params.clone();
                minus[s].data_mut()[idx] -= h;
                let (tp, op) = run(&plus);
                let (tm, om) = run(&minus);
                let numeric = (tp.value(op).item() - tm.value(om).item()) / (2.0 * h);
                let analytic = grads.slots[s].data()[idx];
                assert!(
                    (numeric - analytic).abs() <= 1e-4 * (numeric.abs() + analytic.abs()) + 1e-8,
                    "slot {s} idx {idx}: numeric {numeric} analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn sum_of_params_has_unit_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(0, &Tensor::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]));
        let s = tape.sum(p);
        let mut g = Gradients::zeros([[2, 2], [1, 3]]);
        tape.backward(s, 1.0, &mut g).unwrap();
        assert!(g.slots[0].data().iter().all(|&v| v == 1.0));
        assert!(g.slots[1].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_times_anything_has_zero_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(0, &Tensor::from_vec(1, 3, vec![1.0, -2.0, 3.0]));
        let t = tape.tanh(p);
        let s = tape.sum(t);
        let z = tape.scale(s, 0.0);
        let mut g = Gradients::zeros([[1, 3]]);
        tape.backward(z, 1.0, &mut g).unwrap();
        assert!(g.slots[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = vec![random(&mut rng, 3, 4), random(&mut rng, 4, 2), random(&mut rng, 1, 2)];
        check(params, |t, v| {
            let h = t.matmul(v[0], v[1]);
            let h = t.add_row(h, v[2]);
            let a = t.tanh(h);
            let b = t.sigmoid(h);
            let c = t.mul(a, b);
            let d = t.relu(c);
            let e = t.sub(d, a);
            let f = t.scale(e, 1.7);
            let m = t.mean_rows(f);
            t.sum(m)
        });
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = vec![random(&mut rng, 4, 3), random(&mut rng, 4, 2)];
        let idx: Rc<[usize]> = vec![0, 2, 2, 3, 1].into();
        let seg: Rc<[Vec<usize>]> = vec![vec![0, 1], vec![2], vec![3, 4]].into();
        for pool in [Pool::Mean, Pool::Max, Pool::Min] {
            let (idx, seg) = (idx.clone(), seg.clone());
            check(params.clone(), move |t, v| {
                let cat = t.concat_cols(v[0], v[1]);
                let g = t.gather_rows(cat, idx.clone());
                let s = t.slice_cols(g, 1, 3);
                let p = t.segment_pool(s, seg.clone(), pool);
                let sc = t.scatter_add_rows(p, vec![1, 0, 1].into(), 2);
                let r = t.concat_rows(&[sc, p]);
                let w = t.col_affine(r, &[0.1, -0.2, 0.3], vec![2.0, 0.5, -1.0].into());
                let q = t.mul(w, w);
                t.sum(q)
            });
        }
    }

    #[test]
    fn log_softmax_pick_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = vec![random(&mut rng, 4, 1)];
        check(params, |t, v| {
            let (lp, _) = t.log_softmax_pick(v[0], &[true, false, true, true], 2);
            lp
        });
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let p = Tape::masked_softmax(&[1.0, 50.0, -1.0], &[true, false, true]);
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_forward_is_detected() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(f64::NAN));
        tape.relu(x);
        assert!(matches!(tape.check_finite(), Err(Error::NonFinite(_))));
    }
}

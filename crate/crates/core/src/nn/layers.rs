use std::rc::Rc;

use rand::Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Named parameter tensors. Non-trainable entries hold frozen statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
    trainable: Vec<bool>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> usize {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        self.trainable.push(trainable);
        self.names.len() - 1
    }

    /// Glorot-uniform matrix in `+-sqrt(6 / (fan_in + fan_out))`.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> usize {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        self.add(name, Tensor::from_vec(rows, cols, data), true)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_trainable(&self, slot: usize) -> bool {
        self.trainable[slot]
    }

    pub fn get(&self, slot: usize) -> &Tensor {
        &self.values[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.values[slot]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn shapes(&self) -> Vec<[usize; 2]> {
        self.values.iter().map(Tensor::shape).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

/// Collects the inputs of one prenorm layer during calibration.
#[derive(Debug, Default)]
pub struct Calibration {
    pub target: usize,
    pub rows: Vec<Vec<f64>>,
}

/// Forward-pass context: a fresh tape plus a per-slot cache of parameter
/// nodes so each parameter enters the tape once.
pub struct Ctx<'a> {
    pub tape: Tape,
    pub params: &'a ParamSet,
    cache: Vec<Option<Var>>,
    prenorm_counter: usize,
    calibration: Option<&'a mut Calibration>,
}

impl<'a> Ctx<'a> {
    pub fn new(params: &'a ParamSet) -> Self {
        Self {
            tape: Tape::new(),
            params,
            cache: vec![None; params.len()],
            prenorm_counter: 0,
            calibration: None,
        }
    }

    pub fn calibrating(params: &'a ParamSet, calibration: &'a mut Calibration) -> Self {
        let mut ctx = Self::new(params);
        ctx.calibration = Some(calibration);
        ctx
    }

    pub fn p(&mut self, slot: usize) -> Var {
        if let Some(v) = self.cache[slot] {
            return v;
        }
        let v = self.tape.param(slot, self.params.get(slot));
        self.cache[slot] = Some(v);
        v
    }
}

/// Affine map `x W + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let w = ps.add_glorot(format!("{name}.w"), fan_in, fan_out, rng);
        let b = ps.add(format!("{name}.b"), Tensor::zeros(1, fan_out), true);
        Self { w, b }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Var {
        let (w, b) = (ctx.p(self.w), ctx.p(self.b));
        let h = ctx.tape.matmul(x, w);
        ctx.tape.add_row(h, b)
    }
}

/// Per-feature affine normalization `(x - shift) * scale` with frozen
/// statistics; the identity until calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreNorm {
    pub shift: usize,
    pub scale: usize,
}

impl PreNorm {
    pub fn new(ps: &mut ParamSet, name: &str, width: usize) -> Self {
        let shift = ps.add(format!("{name}.shift"), Tensor::zeros(1, width), false);
        let scale = ps.add(
            format!("{name}.scale"),
            Tensor::row_vector(vec![1.0; width]),
            false,
        );
        Self { shift, scale }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Var {
        let index = ctx.prenorm_counter;
        ctx.prenorm_counter += 1;
        if let Some(cal) = ctx.calibration.as_deref_mut() {
            if cal.target == index {
                let t = ctx.tape.value(x);
                for i in 0..t.rows() {
                    cal.rows.push(t.row(i).to_vec());
                }
            }
        }
        let shift = ctx.params.get(self.shift).data().to_vec();
        let scale: Rc<[f64]> = ctx.params.get(self.scale).data().into();
        ctx.tape.col_affine(x, &shift, scale)
    }

    /// Sets the statistics from collected rows: mean shift and inverse
    /// standard deviation (1 for near-constant features).
    pub fn calibrate(&self, ps: &mut ParamSet, rows: &[Vec<f64>]) {
        let width = ps.get(self.shift).cols();
        if rows.is_empty() {
            return;
        }
        let count = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|s| {
                let sd = (s / count).sqrt();
                if sd > 1e-8 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        *ps.get_mut(self.shift) = Tensor::row_vector(mean);
        *ps.get_mut(self.scale) = Tensor::row_vector(scale);
    }
}

/// LSTM cell with fused gate weights ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lstm {
    pub wx: usize,
    pub wh: usize,
    pub b: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        forget_bias: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let wx = ps.add_glorot(format!("{name}.wx"), input, 4 * hidden, rng);
        let wh = ps.add_glorot(format!("{name}.wh"), hidden, 4 * hidden, rng);
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|v| *v = forget_bias);
        let b = ps.add(format!("{name}.b"), Tensor::row_vector(bias), true);
        Self { wx, wh, b, hidden }
    }

    /// One step on a `1 x input` row; returns the new `(h, c)`.
    pub fn step(&self, ctx: &mut Ctx, x: Var, h: Var, c: Var) -> (Var, Var) {
        let (wx, wh, b) = (ctx.p(self.wx), ctx.p(self.wh), ctx.p(self.b));
        let t = &mut ctx.tape;
        let zx = t.matmul(x, wx);
        let zh = t.matmul(h, wh);
        let z = t.add(zx, zh);
        let z = t.add_row(z, b);
        let n = self.hidden;
        let i = t.slice_cols(z, 0, n);
        let i = t.sigmoid(i);
        let f = t.slice_cols(z, n, n);
        let f = t.sigmoid(f);
        let g = t.slice_cols(z, 2 * n, n);
        let g = t.tanh(g);
        let o = t.slice_cols(z, 3 * n, n);
        let o = t.sigmoid(o);
        let fc = t.mul(f, c);
        let ig = t.mul(i, g);
        let c_new = t.add(fc, ig);
        let tc = t.tanh(c_new);
        let h_new = t.mul(o, tc);
        (h_new, c_new)
    }
}

use serde::{Deserialize, Serialize};

use super::layers::ParamSet;
use super::tape::Gradients;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm the gradient is clipped to before the update.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

/// Adam over a fixed subset of parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub slots: Vec<usize>,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, slots: Vec<usize>, config: AdamConfig) -> Self {
        let zeros = |s: &usize| {
            let [r, c] = params.get(*s).shape();
            Tensor::zeros(r, c)
        };
        Self {
            config,
            m: slots.iter().map(zeros).collect(),
            v: slots.iter().map(zeros).collect(),
            slots,
            t: 0,
        }
    }

    /// L2 norm of the gradient restricted to this optimizer's slots.
    pub fn grad_norm(&self, grads: &Gradients) -> f64 {
        self.slots
            .iter()
            .map(|&s| grads.slots[s].norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Clips, then applies one update with learning rate `lr`. Returns the
    /// gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients, lr: f64) -> Result<f64> {
        let norm = self.grad_norm(grads);
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient norm".into()));
        }
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, &slot) in self.slots.iter().enumerate() {
            let g = grads.slots[slot].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let w = params.get_mut(slot).data_mut();
            for i in 0..w.len() {
                let gi = g[i] * clip;
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(norm)
    }
}

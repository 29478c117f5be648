//! Minimal differentiable substrate and the three networks: the GCNN
//! encoder (θ_G), the pointer decoder (θ_P) and the critic (θ_c).

mod adam;
mod checkpoint;
mod critic;
mod gcnn;
pub mod gradcheck;
mod layers;
mod pointer;
mod tape;
mod tensor;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use critic::Critic;
pub use gcnn::{Gcnn, GraphInput};
pub use layers::{Calibration, Ctx, Linear, Lstm, ParamSet, PreNorm};
pub use pointer::{DecodeMode, Pointer, PointerOutput};
pub use tape::{Gradients, Pool, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub width: usize,
    pub gcnn_rounds: usize,
    pub pointer_hidden: usize,
    pub critic_hidden: usize,
    pub forget_bias: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            width: 64,
            gcnn_rounds: 2,
            pointer_hidden: 128,
            critic_hidden: 64,
            forget_bias: 1.0,
        }
    }
}

/// All learnable parameters with their layout.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub config: NetworkConfig,
    pub params: ParamSet,
    pub gcnn: Gcnn,
    pub pointer: Pointer,
    pub critic: Critic,
    /// Whether the prenorm statistics have been calibrated (then frozen).
    pub calibrated: bool,
    critic_start: usize,
}

impl PolicyParams {
    pub fn new(config: NetworkConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let gcnn = Gcnn::new(&mut params, config.width, config.gcnn_rounds, &mut rng);
        let pointer = Pointer::new(
            &mut params,
            config.width,
            config.pointer_hidden,
            config.forget_bias,
            &mut rng,
        );
        let critic_start = params.len();
        let critic = Critic::new(&mut params, config.width, config.critic_hidden, &mut rng);
        Self {
            config,
            params,
            gcnn,
            pointer,
            critic,
            calibrated: false,
            critic_start,
        }
    }

    /// Trainable slots of θ_G and θ_P.
    pub fn policy_slots(&self) -> Vec<usize> {
        (0..self.critic_start)
            .filter(|&s| self.params.is_trainable(s))
            .collect()
    }

    /// Trainable slots of θ_c.
    pub fn critic_slots(&self) -> Vec<usize> {
        (self.critic_start..self.params.len())
            .filter(|&s| self.params.is_trainable(s))
            .collect()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients::zeros(self.params.shapes())
    }

    /// Calibrates every prenorm layer in forward order on `graphs`, each
    /// layer seeing inputs produced by the already-calibrated layers before
    /// it, then freezes them.
    pub fn calibrate(&mut self, graphs: &[GraphInput]) -> Result<()> {
        for (target, pn) in self.gcnn.prenorms().into_iter().enumerate() {
            let mut cal = Calibration {
                target,
                rows: Vec::new(),
            };
            for g in graphs {
                let mut ctx = Ctx::calibrating(&self.params, &mut cal);
                self.gcnn.forward(&mut ctx, g)?;
            }
            pn.calibrate(&mut self.params, &cal.rows);
        }
        self.calibrated = true;
        Ok(())
    }

    /// Stores every parameter as `param/<name>`.
    pub fn export_tensors(&self) -> Vec<(String, Tensor)> {
        self.params
            .names()
            .iter()
            .enumerate()
            .map(|(s, n)| (format!("param/{n}"), self.params.get(s).clone()))
            .collect()
    }

    /// Loads parameters saved by [`Self::export_tensors`]; every name and
    /// shape must match this layout.
    pub fn import_tensors(&mut self, ck: &Checkpoint) -> Result<()> {
        for s in 0..self.params.len() {
            let name = format!("param/{}", self.params.name(s));
            let t = ck
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != self.params.get(s).shape() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    t.shape(),
                    self.params.get(s).shape()
                )));
            }
            *self.params.get_mut(s) = t.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;

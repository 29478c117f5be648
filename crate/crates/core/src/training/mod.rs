//! REINFORCE trainer with a learned critic baseline, evaluation sweeps and a
//! brute-force permutation oracle.
//!
//! Each step draws a batch of training instances with replacement, samples a
//! cluster order per instance, scores it with the solver environment, and
//! applies two updates: gradient ascent on `(R - b) log p` for the encoder
//! and pointer, and gradient descent on `(b - R)^2` for the critic.

mod eval;
mod oracle;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use eval::{
    cdf_table, evaluate, write_eval_csv, EvalConfig, EvalReport, EvalRow, IdentityProposer,
    PolicyProposer, Proposer, UniformProposer,
};
pub use oracle::{
    brute_force_oracle, check_order_sensitivity, order_sensitivity, OracleTable, OrderSensitivity,
    MAX_ORACLE_K,
};

use crate::error::{Error, Result};
use crate::lp::{ColumnPermutation, LpInstance};
use crate::nn::{Adam, AdamConfig, Checkpoint, Ctx, DecodeMode, NetworkConfig, PolicyParams, Pool, Tensor};
use crate::lp::expand_cluster_permutation;
use crate::reformulate::{policy_forward, PreparedInstance, SplitMethod};
use crate::simplex::{evaluate_metric, Metric, SolverConfig, SolverEnvironment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RewardMode {
    /// Baseline metric minus reformulated metric.
    #[default]
    Raw,
    /// The raw reward divided by `max(baseline, 1)`.
    Relative,
}

impl RewardMode {
    pub fn reward(self, baseline: f64, permuted: f64) -> f64 {
        match self {
            RewardMode::Raw => baseline - permuted,
            RewardMode::Relative => (baseline - permuted) / baseline.max(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Critic learning rate; the policy rate when unset.
    pub critic_lr: Option<f64>,
    pub lr_decay: f64,
    pub decay_interval_steps: usize,
    pub k_clusters: usize,
    pub pool: Pool,
    pub split_method: SplitMethod,
    pub k_shot_eval: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub metric: Metric,
    pub reward_mode: RewardMode,
    pub network: NetworkConfig,
    pub adam: AdamConfig,
    /// Use at most this many training instances (all when unset).
    pub train_size: Option<usize>,
    pub val_size: Option<usize>,
    /// Write a checkpoint every this many steps (and always at the end).
    pub checkpoint_interval: usize,
    /// Fill the `wall_time` log column; off keeps the log reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::profile(Profile::Paper)
    }
}

impl TrainConfig {
    pub fn profile(profile: Profile) -> Self {
        let (steps, k_clusters, train_size, val_size) = match profile {
            Profile::Paper => (40_000, 20, Some(640), Some(320)),
            Profile::Desk => (5_000, 5, None, None),
        };
        Self {
            steps,
            batch_size: 8,
            lr: 1e-4,
            critic_lr: None,
            lr_decay: 0.96,
            decay_interval_steps: 1000,
            k_clusters,
            pool: Pool::Mean,
            split_method: SplitMethod::ContiguousBlocks,
            k_shot_eval: 3,
            seed: 0,
            solver: SolverConfig::default(),
            metric: Metric::Iterations,
            reward_mode: RewardMode::Raw,
            network: NetworkConfig::default(),
            adam: AdamConfig::default(),
            train_size,
            val_size,
            checkpoint_interval: 1000,
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("steps and batch_size must be at least 1".into()));
        }
        if self.k_clusters == 0 || self.decay_interval_steps == 0 || self.checkpoint_interval == 0 {
            return Err(Error::Config(
                "k_clusters, decay_interval_steps and checkpoint_interval must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.critic_lr.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1]".into()));
        }
        self.solver.validate()
    }

    /// Policy learning rate in effect at 0-based step `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr * self.lr_decay.powi((step / self.decay_interval_steps) as i32)
    }

    fn critic_lr_at(&self, step: usize) -> f64 {
        self.critic_lr.unwrap_or(self.lr) * self.lr_decay.powi((step / self.decay_interval_steps) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub instance: usize,
    pub baseline_iterations: f64,
    pub permuted_iterations: f64,
    pub reward: f64,
    pub baseline_prediction: f64,
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub mean_reward: f64,
    pub critic_loss: f64,
    pub lr: f64,
    pub wall_time: f64,
}

/// Parameters, optimizer moments and progress; everything a resumed run
/// needs to continue bit-identically.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub policy: PolicyParams,
    pub policy_opt: Adam,
    pub critic_opt: Adam,
    /// Completed steps.
    pub step: usize,
    pub log: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: TrainConfig,
    step: usize,
    calibrated: bool,
    policy_adam_t: u64,
    critic_adam_t: u64,
    log: Vec<StepRecord>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Self {
        let policy = PolicyParams::new(cfg.network, cfg.seed);
        let policy_opt = Adam::new(&policy.params, policy.policy_slots(), cfg.adam);
        let critic_opt = Adam::new(&policy.params, policy.critic_slots(), cfg.adam);
        Self {
            policy,
            policy_opt,
            critic_opt,
            step: 0,
            log: Vec::new(),
        }
    }

    pub fn to_checkpoint(&self, cfg: &TrainConfig) -> Result<Checkpoint> {
        let meta = CheckpointMeta {
            config: cfg.clone(),
            step: self.step,
            calibrated: self.policy.calibrated,
            policy_adam_t: self.policy_opt.t,
            critic_adam_t: self.critic_opt.t,
            log: self.log.clone(),
        };
        let mut tensors = self.policy.export_tensors();
        for (tag, opt) in [("policy", &self.policy_opt), ("critic", &self.critic_opt)] {
            for (k, &slot) in opt.slots.iter().enumerate() {
                let name = self.policy.params.name(slot);
                tensors.push((format!("adam/{tag}/m/{name}"), opt.m[k].clone()));
                tensors.push((format!("adam/{tag}/v/{name}"), opt.v[k].clone()));
            }
        }
        Ok(Checkpoint {
            meta: serde_json::to_string(&meta)?,
            tensors,
        })
    }

    /// Restores a state saved by [`Self::to_checkpoint`]. Returns it with
    /// the configuration it was trained under.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, TrainConfig)> {
        let meta: CheckpointMeta = serde_json::from_str(&ck.meta)?;
        let mut state = Self::new(&meta.config);
        state.policy.import_tensors(ck)?;
        state.policy.calibrated = meta.calibrated;
        state.step = meta.step;
        state.log = meta.log;
        let params = &state.policy.params;
        for (tag, opt, t) in [
            ("policy", &mut state.policy_opt, meta.policy_adam_t),
            ("critic", &mut state.critic_opt, meta.critic_adam_t),
        ] {
            opt.t = t;
            for (k, &slot) in opt.slots.iter().enumerate() {
                let name = params.name(slot);
                let get = |kind: &str| -> Result<Tensor> {
                    let key = format!("adam/{tag}/{kind}/{name}");
                    ck.get(&key)
                        .cloned()
                        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))
                };
                opt.m[k] = get("m")?;
                opt.v[k] = get("v")?;
            }
        }
        Ok((state, meta.config))
    }

    /// Loads only the policy parameters from a training checkpoint.
    pub fn load_policy(path: &Path) -> Result<PolicyParams> {
        Ok(Self::from_checkpoint(&Checkpoint::read(path)?)?.0.policy)
    }
}

/// Where training writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    /// Directory receiving `metrics.csv` and `step_NNNNNN.ckpt` files.
    pub dir: Option<PathBuf>,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn checkpoint_name(step: usize) -> String {
    format!("step_{step:06}.ckpt")
}

/// Training instance with its cached baseline metric.
struct TrainInstance<'a> {
    lp: &'a LpInstance,
    prepared: PreparedInstance,
    baseline: f64,
}

/// Drops instances whose identity order does not solve to optimality.
fn screen<'a>(
    env: &dyn SolverEnvironment,
    cfg: &TrainConfig,
    instances: &'a [LpInstance],
) -> Result<Vec<TrainInstance<'a>>> {
    let take = cfg.train_size.unwrap_or(instances.len()).min(instances.len());
    let baselines: Vec<Result<f64>> = instances[..take]
        .par_iter()
        .map(|lp| evaluate_metric(env, lp, &ColumnPermutation::identity(lp.num_cols()), cfg.metric, &cfg.solver))
        .collect();
    let mut out = Vec::new();
    for (lp, b) in instances[..take].iter().zip(baselines) {
        match b {
            Ok(baseline) => out.push(TrainInstance {
                lp,
                prepared: PreparedInstance::new(lp, cfg.k_clusters, cfg.split_method)?,
                baseline,
            }),
            Err(e) => log::warn!("dropping training instance {}: {e}", lp.name),
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no training instance solves to optimality".into()));
    }
    Ok(out)
}

/// Per-step stream: instance draws followed by one sampling seed per slot.
fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64 + 1);
    rng
}

/// Trains from scratch, or continues `resume` up to `cfg.steps` steps.
pub fn train(
    env: &dyn SolverEnvironment,
    cfg: &TrainConfig,
    instances: &[LpInstance],
    output: &TrainOutput,
    resume: Option<TrainState>,
) -> Result<TrainState> {
    cfg.validate()?;
    let data = screen(env, cfg, instances)?;
    let mut state = resume.unwrap_or_else(|| TrainState::new(cfg));
    if state.step > cfg.steps {
        return Err(Error::Config(format!(
            "checkpoint is at step {} beyond the configured {} steps",
            state.step, cfg.steps
        )));
    }
    if let Some(dir) = &output.dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let start = Instant::now();
    while state.step < cfg.steps {
        let record = train_step(env, cfg, &data, &mut state)?;
        if cfg.record_wall_time {
            state.log.push(StepRecord {
                wall_time: start.elapsed().as_secs_f64(),
                ..record
            });
        } else {
            state.log.push(record);
        }
        state.step += 1;
        if let Some(dir) = &output.dir {
            if state.step % cfg.checkpoint_interval == 0 || state.step == cfg.steps {
                state.to_checkpoint(cfg)?.write(&dir.join(checkpoint_name(state.step)))?;
                write_metrics_csv(&state.log, &dir.join(METRICS_FILE))?;
            }
        }
        if state.step % 100 == 0 {
            let last = state.log.last().expect("logged");
            log::info!(
                "step {} mean_reward {:.4} critic_loss {:.4} lr {:.3e}",
                state.step,
                last.mean_reward,
                last.critic_loss,
                last.lr
            );
        }
    }
    if let Some(dir) = &output.dir {
        state.to_checkpoint(cfg)?.write(&dir.join(FINAL_CHECKPOINT))?;
        write_metrics_csv(&state.log, &dir.join(METRICS_FILE))?;
    }
    Ok(state)
}

fn train_step(
    env: &dyn SolverEnvironment,
    cfg: &TrainConfig,
    data: &[TrainInstance],
    state: &mut TrainState,
) -> Result<StepRecord> {
    let step = state.step;
    let mut rng = step_rng(cfg.seed, step);
    let picks: Vec<usize> = (0..cfg.batch_size).map(|_| rng.gen_range(0..data.len())).collect();
    let seeds: Vec<u64> = (0..cfg.batch_size).map(|_| rng.gen()).collect();
    if !state.policy.calibrated {
        let graphs: Vec<_> = picks.iter().map(|&i| data[i].prepared.graph.clone()).collect();
        state.policy.calibrate(&graphs)?;
    }

    let policy = &state.policy;
    let mut grads = policy.zero_grads();
    let mut ctxs = Vec::with_capacity(picks.len());
    let mut traces = Vec::with_capacity(picks.len());
    let mut predictions = Vec::with_capacity(picks.len());
    let mut perms = Vec::with_capacity(picks.len());
    for (&i, &seed) in picks.iter().zip(&seeds) {
        let mut sample_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ctx = Ctx::new(&policy.params);
        let trace = policy_forward(&mut ctx, policy, &data[i].prepared, cfg.pool, DecodeMode::Sample(&mut sample_rng))?;
        let embeddings = ctx.tape.value(trace.embeddings).clone();
        let b = policy.critic.forward(&mut ctx, &embeddings);
        perms.push(expand_cluster_permutation(&data[i].prepared.split, &trace.output.perm)?);
        predictions.push(b);
        traces.push(trace);
        ctxs.push(ctx);
    }
    let lps: Vec<&LpInstance> = picks.iter().map(|&i| data[i].lp).collect();
    let metrics: Vec<Result<f64>> = lps
        .par_iter()
        .zip(perms.par_iter())
        .map(|(lp, perm)| evaluate_metric(env, lp, perm, cfg.metric, &cfg.solver))
        .collect();

    let mut records = Vec::new();
    for (slot, (&i, m)) in picks.iter().zip(&metrics).enumerate() {
        match m {
            Ok(permuted) => records.push((slot, RewardRecord {
                instance: i,
                baseline_iterations: data[i].baseline,
                permuted_iterations: *permuted,
                reward: cfg.reward_mode.reward(data[i].baseline, *permuted),
                baseline_prediction: ctxs[slot].tape.value(predictions[slot]).item(),
            })),
            Err(e) => log::warn!("step {step}: skipping {}: {e}", data[i].lp.name),
        }
    }
    let lr = cfg.lr_at(step);
    if records.is_empty() {
        return Ok(StepRecord {
            step: step + 1,
            mean_reward: 0.0,
            critic_loss: 0.0,
            lr,
            wall_time: 0.0,
        });
    }
    let scale = 1.0 / records.len() as f64;
    let mut mean_reward = 0.0;
    let mut critic_loss = 0.0;
    for (slot, r) in &records {
        let advantage = r.reward - r.baseline_prediction;
        let tape = &ctxs[*slot].tape;
        tape.backward(traces[*slot].output.log_prob, -advantage * scale, &mut grads)?;
        tape.backward(predictions[*slot], -2.0 * advantage * scale, &mut grads)?;
        mean_reward += r.reward * scale;
        critic_loss += advantage * advantage * scale;
    }
    drop(ctxs);
    state.policy_opt.step(&mut state.policy.params, &grads, lr)?;
    state.critic_opt.step(&mut state.policy.params, &grads, cfg.critic_lr_at(step))?;
    Ok(StepRecord {
        step: step + 1,
        mean_reward,
        critic_loss,
        lr,
        wall_time: 0.0,
    })
}

pub fn write_metrics_csv(log: &[StepRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in log {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

#[cfg(test)]
mod tests;

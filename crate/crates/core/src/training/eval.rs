use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::instance_seed;
use crate::error::{Error, Result};
use crate::lp::{expand_cluster_permutation, ColumnPermutation, LpInstance};
use crate::nn::{PolicyParams, Pool};
use crate::reformulate::{propose_prepared, PreparedInstance, ProposalMode, SplitMethod};
use crate::simplex::{solve_permuted, SolveStatus, SolverConfig, SolverEnvironment};

/// Source of candidate column orders for evaluation.
pub trait Proposer {
    /// `shots` candidate permutations for `inst`, drawn from seeds
    /// `base_seed, base_seed + 1, ...`.
    fn propose(&self, inst: &PreparedInstance, shots: usize, base_seed: u64) -> Result<Vec<ColumnPermutation>>;
}

/// Samples from a trained (or untrained) policy.
#[derive(Debug, Clone, Copy)]
pub struct PolicyProposer<'a> {
    pub params: &'a PolicyParams,
    pub pool: Pool,
    pub mode: ProposalMode,
}

impl Proposer for PolicyProposer<'_> {
    fn propose(&self, inst: &PreparedInstance, shots: usize, base_seed: u64) -> Result<Vec<ColumnPermutation>> {
        (0..shots)
            .map(|i| {
                propose_prepared(inst, self.params, self.pool, self.mode, base_seed.wrapping_add(i as u64))
                    .map(|s| s.column_perm)
            })
            .collect()
    }
}

/// Always the original order.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProposer;

impl Proposer for IdentityProposer {
    fn propose(&self, inst: &PreparedInstance, shots: usize, _: u64) -> Result<Vec<ColumnPermutation>> {
        Ok(vec![ColumnPermutation::identity(inst.split.num_columns()); shots])
    }
}

/// Uniformly random cluster orders.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformProposer;

impl Proposer for UniformProposer {
    fn propose(&self, inst: &PreparedInstance, shots: usize, base_seed: u64) -> Result<Vec<ColumnPermutation>> {
        (0..shots)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(i as u64));
                let mut order: Vec<usize> = (0..inst.split.k()).collect();
                order.shuffle(&mut rng);
                expand_cluster_permutation(&inst.split, &order)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k_clusters: usize,
    pub split_method: SplitMethod,
    pub k_shots: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Report measured solve times; off writes zeros for reproducible files.
    pub record_time: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_clusters: 20,
            split_method: SplitMethod::ContiguousBlocks,
            k_shots: 3,
            seed: 0,
            solver: SolverConfig::default(),
            record_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub instance: String,
    pub baseline_iterations: Option<f64>,
    pub best_iterations: Option<f64>,
    /// Best-of-k iterations over baseline iterations.
    pub ratio: Option<f64>,
    pub baseline_time: Option<f64>,
    pub best_time: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub evaluated: usize,
    pub failed: usize,
    pub mean_ratio: f64,
    pub mean_iteration_reduction: f64,
    pub stderr_iteration_reduction: f64,
    pub mean_time_reduction: f64,
    pub stderr_time_reduction: f64,
    /// Fraction of instances with ratio below 1.
    pub improved_fraction: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Solves every instance under its original order and under the best of
/// `cfg.k_shots` proposals. Per-instance failures are recorded, not fatal.
pub fn evaluate(
    env: &dyn SolverEnvironment,
    instances: &[LpInstance],
    proposer: &dyn Proposer,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if cfg.k_shots == 0 {
        return Err(Error::Config("k_shots must be at least 1".into()));
    }
    let mut jobs = Vec::with_capacity(instances.len());
    for (idx, lp) in instances.iter().enumerate() {
        let perms = PreparedInstance::new(lp, cfg.k_clusters.min(lp.num_cols().max(1)), cfg.split_method)
            .and_then(|inst| proposer.propose(&inst, cfg.k_shots, instance_seed(cfg.seed, idx, 0)));
        jobs.push(perms);
    }
    let rows: Vec<EvalRow> = instances
        .par_iter()
        .zip(jobs.par_iter())
        .map(|(lp, perms)| evaluate_one(env, lp, perms, cfg))
        .collect();

    let ok: Vec<&EvalRow> = rows.iter().filter(|r| r.ratio.is_some()).collect();
    let ratios: Vec<f64> = ok.iter().map(|r| r.ratio.expect("ok")).collect();
    let iter_red: Vec<f64> = ratios.iter().map(|r| 1.0 - r).collect();
    let time_red: Vec<f64> = ok
        .iter()
        .map(|r| {
            let (b, t) = (r.baseline_time.unwrap_or(0.0), r.best_time.unwrap_or(0.0));
            if b > 0.0 {
                1.0 - t / b
            } else {
                0.0
            }
        })
        .collect();
    let (mean_ratio, _) = mean_stderr(&ratios);
    let (mi, si) = mean_stderr(&iter_red);
    let (mt, st) = mean_stderr(&time_red);
    let improved = ratios.iter().filter(|&&r| r < 1.0).count();
    Ok(EvalReport {
        evaluated: ok.len(),
        failed: rows.len() - ok.len(),
        mean_ratio,
        mean_iteration_reduction: mi,
        stderr_iteration_reduction: si,
        mean_time_reduction: mt,
        stderr_time_reduction: st,
        improved_fraction: if ok.is_empty() { 0.0 } else { improved as f64 / ok.len() as f64 },
        rows,
    })
}

fn evaluate_one(
    env: &dyn SolverEnvironment,
    lp: &LpInstance,
    perms: &Result<Vec<ColumnPermutation>>,
    cfg: &EvalConfig,
) -> EvalRow {
    let mut row = EvalRow {
        instance: lp.name.clone(),
        baseline_iterations: None,
        best_iterations: None,
        ratio: None,
        baseline_time: None,
        best_time: None,
        error: None,
    };
    let time = |t: f64| if cfg.record_time { t } else { 0.0 };
    let perms = match perms {
        Ok(p) => p,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let base = match solve_permuted(env, lp, &ColumnPermutation::identity(lp.num_cols()), &cfg.solver) {
        Ok((_, m)) if m.status == SolveStatus::Optimal => m,
        Ok((_, m)) => {
            row.error = Some(format!("baseline status {:?}", m.status));
            return row;
        }
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.baseline_iterations = Some(base.iterations as f64);
    row.baseline_time = Some(time(base.solve_time));
    let mut best: Option<(usize, f64)> = None;
    for p in perms {
        if let Ok((_, m)) = solve_permuted(env, lp, p, &cfg.solver) {
            if m.status == SolveStatus::Optimal && best.map_or(true, |(it, _)| m.iterations < it) {
                best = Some((m.iterations, m.solve_time));
            }
        }
    }
    match best {
        Some((it, t)) => {
            row.best_iterations = Some(it as f64);
            row.best_time = Some(time(t));
            row.ratio = Some(it as f64 / (base.iterations as f64).max(1.0));
        }
        None => row.error = Some("every shot failed to solve".into()),
    }
    row
}

/// Empirical CDF of the ratios at each distinct value: `(ratio, fraction <= ratio)`.
pub fn cdf_table(report: &EvalReport) -> Vec<(f64, f64)> {
    let mut ratios: Vec<f64> = report.rows.iter().filter_map(|r| r.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, r) in ratios.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *r => last.1 = frac,
            _ => out.push((*r, frac)),
        }
    }
    out
}

/// Per-instance rows, then the ratio CDF in a second file next to it.
pub fn write_eval_csv(report: &EvalReport, rows_path: &Path, cdf_path: &Path) -> Result<()> {
    let io = |p: &Path, e: csv::Error| Error::io(p, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(rows_path).map_err(|e| io(rows_path, e))?;
    for r in &report.rows {
        w.serialize(r).map_err(|e| io(rows_path, e))?;
    }
    w.flush().map_err(|e| Error::io(rows_path, e))?;
    let mut w = csv::Writer::from_path(cdf_path).map_err(|e| io(cdf_path, e))?;
    w.write_record(["ratio", "cumulative_probability"]).map_err(|e| io(cdf_path, e))?;
    for (r, f) in cdf_table(report) {
        w.write_record([r.to_string(), f.to_string()]).map_err(|e| io(cdf_path, e))?;
    }
    w.flush().map_err(|e| Error::io(cdf_path, e))
}

//! Deterministic bounded revised simplex used as the reinforcement-learning
//! environment.
//!
//! The solver runs two phases from the feasible-slack starting basis: phase 1
//! minimizes the sum of artificial variables, phase 2 the true objective.
//! Entering variables are priced with Dantzig's rule and ties go to the lowest
//! column index, so the pivot path (and iteration count) depends on column
//! order while the optimum does not.

mod basis;
mod lu;
mod solver;

use serde::{Deserialize, Serialize};

pub use basis::{initial_slack_basis, Artificial, Basis, VarStatus};
pub use lu::{DenseLu, SingularBasis};
pub use solver::solve;

use crate::error::{Error, Result};
use crate::lp::{apply_permutation, ColumnPermutation, LpInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// The basis could not be refactored or the final point failed the
    /// accuracy gate after repeated recovery attempts.
    NumericalTrouble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pricing {
    Dantzig,
    Bland,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub primal_tolerance: f64,
    pub dual_tolerance: f64,
    pub pivot_tolerance: f64,
    pub iteration_limit: usize,
    pub pricing: Pricing,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_stall_threshold: usize,
    pub refactor_interval: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            primal_tolerance: 1e-6,
            dual_tolerance: 1e-9,
            pivot_tolerance: 1e-9,
            iteration_limit: 100_000,
            pricing: Pricing::Dantzig,
            bland_stall_threshold: 50,
            refactor_interval: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let tols = [self.primal_tolerance, self.dual_tolerance, self.pivot_tolerance];
        if tols.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.iteration_limit == 0 || self.refactor_interval == 0 {
            return Err(Error::Config(
                "iteration_limit and refactor_interval must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Maximum infeasibility allowed for a solution to count as optimal.
pub const MAX_INF_GATE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveMetrics {
    pub status: SolveStatus,
    /// Total pivots and bound flips over both phases.
    pub iterations: usize,
    pub phase1_iterations: usize,
    pub phase2_iterations: usize,
    /// Wall-clock seconds spent in the pivot loop.
    pub solve_time: f64,
    pub max_inf: f64,
    pub primal_inf: f64,
    pub dual_inf: f64,
}

/// Final point over standard-form columns with its basis.
#[derive(Debug, Clone)]
pub struct BasicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub basis: Basis,
    num_original: usize,
}

impl BasicSolution {
    /// Values of the original (non-slack) columns.
    pub fn original_x(&self) -> &[f64] {
        &self.x[..self.num_original]
    }
}

/// Any LP solver that can serve as the reward environment.
pub trait SolverEnvironment: Sync {
    fn solve(&self, lp: &LpInstance, cfg: &SolverConfig) -> (BasicSolution, SolveMetrics);
}

/// The built-in revised simplex.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinSimplex;

impl SolverEnvironment for BuiltinSimplex {
    fn solve(&self, lp: &LpInstance, cfg: &SolverConfig) -> (BasicSolution, SolveMetrics) {
        solve(lp, cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Iterations,
    SolveTime,
}

impl Metric {
    pub fn read(self, m: &SolveMetrics) -> f64 {
        match self {
            Metric::Iterations => m.iterations as f64,
            Metric::SolveTime => m.solve_time,
        }
    }
}

/// Solver metric of `lp` reordered by `perm`; requires an optimal solve.
pub fn evaluate_metric(
    env: &dyn SolverEnvironment,
    lp: &LpInstance,
    perm: &ColumnPermutation,
    metric: Metric,
    cfg: &SolverConfig,
) -> Result<f64> {
    let metrics = solve_permuted(env, lp, perm, cfg)?.1;
    if metrics.status != SolveStatus::Optimal {
        return Err(Error::NonOptimalStatus(metrics.status));
    }
    Ok(metric.read(&metrics))
}

/// Solves `lp` reordered by `perm` (the identity skips the copy).
pub fn solve_permuted(
    env: &dyn SolverEnvironment,
    lp: &LpInstance,
    perm: &ColumnPermutation,
    cfg: &SolverConfig,
) -> Result<(BasicSolution, SolveMetrics)> {
    if perm.is_identity() && perm.len() == lp.num_cols() {
        Ok(env.solve(lp, cfg))
    } else {
        let permuted = apply_permutation(lp, perm)?;
        Ok(env.solve(&permuted, cfg))
    }
}

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{expand_cluster_permutation, LpInstance};
use crate::reformulate::{split_variables, ClusterSplit, SplitMethod};
use crate::simplex::{evaluate_metric, Metric, SolverConfig, SolverEnvironment};

/// Largest cluster count the oracle enumerates (9! orders).
pub const MAX_ORACLE_K: usize = 9;

/// Metric of every cluster order, in lexicographic order of the orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    pub perms: Vec<Vec<usize>>,
    /// `None` where the reordered instance did not solve to optimality.
    pub metrics: Vec<Option<f64>>,
    /// Index of the lowest metric (lexicographically first on ties).
    pub best: usize,
}

impl OracleTable {
    pub fn best_perm(&self) -> &[usize] {
        &self.perms[self.best]
    }

    pub fn metric_of(&self, perm: &[usize]) -> Option<f64> {
        self.perms.iter().position(|p| p == perm).and_then(|i| self.metrics[i])
    }

    /// Fraction of the table strictly better than `metric` (failed entries
    /// count as worse than anything).
    pub fn rank_fraction(&self, metric: f64) -> f64 {
        let better = self.metrics.iter().filter(|m| m.is_some_and(|m| m < metric)).count();
        better as f64 / self.metrics.len() as f64
    }

    pub fn distinct_metrics(&self) -> usize {
        let mut v: Vec<f64> = self.metrics.iter().flatten().copied().collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    }
}

/// Solves `lp` under every order of the clusters of `split`.
pub fn brute_force_oracle(
    env: &dyn SolverEnvironment,
    lp: &LpInstance,
    split: &ClusterSplit,
    metric: Metric,
    cfg: &SolverConfig,
) -> Result<OracleTable> {
    let k = split.k();
    if k > MAX_ORACLE_K {
        return Err(Error::TooManyPermutations { k });
    }
    let perms: Vec<Vec<usize>> = (0..k).permutations(k).collect();
    let metrics: Vec<Option<f64>> = perms
        .par_iter()
        .map(|p| {
            let perm = expand_cluster_permutation(split, p)?;
            Ok(evaluate_metric(env, lp, &perm, metric, cfg).ok())
        })
        .collect::<Result<_>>()?;
    let best = metrics
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|m| (i, m)))
        .fold(None::<(usize, f64)>, |acc, (i, m)| match acc {
            Some((_, b)) if b <= m => acc,
            _ => Some((i, m)),
        })
        .map(|(i, _)| i)
        .ok_or(Error::AllSolvesFailed)?;
    Ok(OracleTable { perms, metrics, best })
}

/// Share of instances whose oracle table holds more than one distinct metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSensitivity {
    pub checked: usize,
    pub sensitive: usize,
    pub fraction: f64,
}

/// Runs the oracle over `instances` at `k` clusters and counts those where
/// the cluster order changes the metric.
pub fn order_sensitivity(
    env: &dyn SolverEnvironment,
    instances: &[LpInstance],
    k: usize,
    method: SplitMethod,
    metric: Metric,
    cfg: &SolverConfig,
) -> Result<OrderSensitivity> {
    let mut sensitive = 0;
    for lp in instances {
        let split = split_variables(lp, k, method)?;
        if brute_force_oracle(env, lp, &split, metric, cfg)?.distinct_metrics() >= 2 {
            sensitive += 1;
        }
    }
    let checked = instances.len();
    Ok(OrderSensitivity {
        checked,
        sensitive,
        fraction: if checked == 0 { 0.0 } else { sensitive as f64 / checked as f64 },
    })
}

/// Rejects scenario parameters whose instances are order-insensitive on
/// more than `1 - min_fraction` of `instances`.
pub fn check_order_sensitivity(
    env: &dyn SolverEnvironment,
    instances: &[LpInstance],
    k: usize,
    method: SplitMethod,
    cfg: &SolverConfig,
    min_fraction: f64,
) -> Result<OrderSensitivity> {
    let report = order_sensitivity(env, instances, k, method, Metric::Iterations, cfg)?;
    if report.checked == 0 || report.fraction < min_fraction {
        return Err(Error::Config(format!(
            "scenario rejected: {} of {} instances are order-sensitive at k={k}",
            report.sensitive, report.checked
        )));
    }
    Ok(report)
}

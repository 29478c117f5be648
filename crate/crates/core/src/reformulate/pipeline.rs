use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::{split_variables, ClusterSplit, SplitMethod};
use crate::error::{Error, Result};
use crate::graph::featurize;
use crate::lp::{expand_cluster_permutation, ColumnPermutation, LpInstance};
use crate::nn::{Ctx, DecodeMode, GraphInput, PointerOutput, PolicyParams, Pool, Tensor, Var};
use crate::simplex::{evaluate_metric, Metric, SolverConfig, SolverEnvironment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReformulateConfig {
    pub k_clusters: usize,
    pub pool: Pool,
    pub split_method: SplitMethod,
    pub metric: Metric,
    pub solver: SolverConfig,
}

impl Default for ReformulateConfig {
    fn default() -> Self {
        Self {
            k_clusters: 20,
            pool: Pool::Mean,
            split_method: SplitMethod::ContiguousBlocks,
            metric: Metric::Iterations,
            solver: SolverConfig::default(),
        }
    }
}

/// One pooled vector per cluster (`k x width`).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterEmbedding {
    pub sigma: Tensor,
}

/// Pools the member rows of every cluster.
pub fn pool_clusters(var_embs: &Tensor, split: &ClusterSplit, pool: Pool) -> Result<ClusterEmbedding> {
    if var_embs.rows() != split.num_columns() {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows for a split over {} columns",
            var_embs.rows(),
            split.num_columns()
        )));
    }
    let width = var_embs.cols();
    let mut sigma = Tensor::zeros(split.k(), width);
    for (c, members) in split.all_members().iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyCluster(c));
        }
        let out = sigma.row_mut(c);
        out.copy_from_slice(var_embs.row(members[0]));
        for &j in &members[1..] {
            for (o, &x) in out.iter_mut().zip(var_embs.row(j)) {
                *o = match pool {
                    Pool::Mean => *o + x,
                    Pool::Max => o.max(x),
                    Pool::Min => o.min(x),
                };
            }
        }
        if pool == Pool::Mean {
            let inv = 1.0 / members.len() as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
    }
    Ok(ClusterEmbedding { sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProposalMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationSample {
    pub cluster_perm: Vec<usize>,
    pub column_perm: ColumnPermutation,
    pub log_prob: f64,
    pub reward: Option<f64>,
}

/// Per-instance tensors that do not depend on the parameters.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub graph: GraphInput,
    pub split: ClusterSplit,
    segments: Rc<[Vec<usize>]>,
}

impl PreparedInstance {
    pub fn new(lp: &LpInstance, k: usize, method: SplitMethod) -> Result<Self> {
        let split = split_variables(lp, k, method)?;
        Ok(Self {
            graph: GraphInput::new(&featurize(lp)),
            segments: split.all_members().to_vec().into(),
            split,
        })
    }
}

/// Tape handles of one policy evaluation.
#[derive(Debug, Clone)]
pub struct PolicyTrace {
    pub output: PointerOutput,
    /// Variable embeddings (`n x width`).
    pub embeddings: Var,
}

/// Runs encoder, pooling and pointer on `ctx`'s tape.
pub fn policy_forward(
    ctx: &mut Ctx,
    params: &PolicyParams,
    inst: &PreparedInstance,
    pool: Pool,
    mode: DecodeMode<'_, ChaCha8Rng>,
) -> Result<PolicyTrace> {
    let embeddings = params.gcnn.forward(ctx, &inst.graph)?;
    let sigma = ctx.tape.segment_pool(embeddings, inst.segments.clone(), pool);
    let output = params.pointer.forward(ctx, sigma, mode)?;
    Ok(PolicyTrace { output, embeddings })
}

/// Draws (or argmaxes) one cluster order for `lp` and expands it.
pub fn propose_permutation(
    lp: &LpInstance,
    params: &PolicyParams,
    cfg: &ReformulateConfig,
    mode: ProposalMode,
    seed: u64,
) -> Result<PermutationSample> {
    let inst = PreparedInstance::new(lp, cfg.k_clusters, cfg.split_method)?;
    propose_prepared(&inst, params, cfg.pool, mode, seed)
}

pub fn propose_prepared(
    inst: &PreparedInstance,
    params: &PolicyParams,
    pool: Pool,
    mode: ProposalMode,
    seed: u64,
) -> Result<PermutationSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx = Ctx::new(&params.params);
    let decode = match mode {
        ProposalMode::Sample => DecodeMode::Sample(&mut rng),
        ProposalMode::Greedy => DecodeMode::Greedy,
    };
    let trace = policy_forward(&mut ctx, params, inst, pool, decode)?;
    let column_perm = expand_cluster_permutation(&inst.split, &trace.output.perm)?;
    Ok(PermutationSample {
        log_prob: ctx.tape.value(trace.output.log_prob).item(),
        cluster_perm: trace.output.perm,
        column_perm,
        reward: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KShotResult {
    pub baseline: f64,
    pub best: PermutationSample,
    /// Every drawn sample in seed order, rewards filled where the solve
    /// succeeded.
    pub all: Vec<PermutationSample>,
    /// Metric of each shot (`None` when the solve was not optimal).
    pub shot_metrics: Vec<Option<f64>>,
}

impl KShotResult {
    pub fn best_metric(&self) -> f64 {
        self.baseline - self.best.reward.expect("best sample has a reward")
    }
}

/// Samples shots with seeds `base_seed, base_seed + 1, ...`, solves each
/// reordered instance and keeps the lowest metric (first drawn on ties).
pub fn k_shot_reformulate(
    env: &dyn SolverEnvironment,
    lp: &LpInstance,
    params: &PolicyParams,
    k_shots: usize,
    cfg: &ReformulateConfig,
    base_seed: u64,
) -> Result<KShotResult> {
    let inst = PreparedInstance::new(lp, cfg.k_clusters, cfg.split_method)?;
    k_shot_prepared(env, lp, &inst, params, k_shots, cfg, base_seed, None)
}

/// As [`k_shot_reformulate`] with a prepared instance and an optional
/// precomputed baseline metric.
#[allow(clippy::too_many_arguments)]
pub fn k_shot_prepared(
    env: &dyn SolverEnvironment,
    lp: &LpInstance,
    inst: &PreparedInstance,
    params: &PolicyParams,
    k_shots: usize,
    cfg: &ReformulateConfig,
    base_seed: u64,
    baseline: Option<f64>,
) -> Result<KShotResult> {
    if k_shots == 0 {
        return Err(Error::Config("k_shots must be at least 1".into()));
    }
    let baseline = match baseline {
        Some(b) => b,
        None => evaluate_metric(env, lp, &ColumnPermutation::identity(lp.num_cols()), cfg.metric, &cfg.solver)?,
    };
    let mut all = (0..k_shots)
        .map(|i| propose_prepared(inst, params, cfg.pool, ProposalMode::Sample, base_seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let shot_metrics: Vec<Option<f64>> = all
        .par_iter()
        .map(|s| evaluate_metric(env, lp, &s.column_perm, cfg.metric, &cfg.solver).ok())
        .collect();
    let mut best: Option<usize> = None;
    for (i, m) in shot_metrics.iter().enumerate() {
        if let Some(m) = *m {
            all[i].reward = Some(baseline - m);
            if best.map_or(true, |b| m < shot_metrics[b].expect("scored")) {
                best = Some(i);
            }
        }
    }
    let best = best.ok_or(Error::AllSolvesFailed)?;
    Ok(KShotResult {
        baseline,
        best: all[best].clone(),
        all,
        shot_metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReformulationReport {
    pub instance: String,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub baseline_iterations: f64,
    pub shot_iterations: Vec<Option<f64>>,
    pub cluster_perm: Vec<usize>,
    pub improvement: f64,
    pub ratio: f64,
}

impl ReformulationReport {
    pub fn new(lp: &LpInstance, result: &KShotResult) -> Self {
        let best = result.best_metric();
        Self {
            instance: lp.name.clone(),
            rows: lp.num_rows(),
            cols: lp.num_cols(),
            nnz: lp.nnz(),
            baseline_iterations: result.baseline,
            shot_iterations: result.shot_metrics.clone(),
            cluster_perm: result.best.cluster_perm.clone(),
            improvement: result.baseline - best,
            ratio: best / result.baseline.max(1.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::datagen::random_lp;
    use crate::nn::NetworkConfig;
    use crate::simplex::{solve, BuiltinSimplex, SolveStatus};

    fn small_params(seed: u64) -> PolicyParams {
        let mut p = PolicyParams::new(
            NetworkConfig {
                width: 8,
                gcnn_rounds: 1,
                pointer_hidden: 8,
                critic_hidden: 4,
                forget_bias: 1.0,
            },
            seed,
        );
        let v = p.params.find("pointer.attention.v").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in p.params.get_mut(v).data_mut() {
            *x = rng.gen_range(-2.0..2.0);
        }
        p
    }

    fn lp(seed: u64, m: usize, n: usize) -> LpInstance {
        random_lp(&mut ChaCha8Rng::seed_from_u64(seed), format!("lp{seed}"), m, n)
    }

    fn cfg(k: usize) -> ReformulateConfig {
        ReformulateConfig {
            k_clusters: k,
            ..Default::default()
        }
    }

    fn embs(n: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(n, w, (0..n * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn singleton_and_duplicate_pools() {
        let e = embs(3, 4, 1);
        let split = ClusterSplit::from_members(3, vec![vec![0], vec![1, 2]]).unwrap();
        for pool in [Pool::Mean, Pool::Max, Pool::Min] {
            let s = pool_clusters(&e, &split, pool).unwrap();
            assert_eq!(s.sigma.row(0), e.row(0));
        }
        let mut dup = e.clone();
        let r1 = dup.row(1).to_vec();
        dup.row_mut(2).copy_from_slice(&r1);
        let s = pool_clusters(&dup, &split, Pool::Mean).unwrap();
        assert_eq!(s.sigma.row(1), r1.as_slice());
    }

    #[test]
    fn value_pooling_matches_tape_pooling() {
        let e = embs(7, 5, 2);
        let split = ClusterSplit::from_members(7, vec![vec![0, 4], vec![1, 2, 6], vec![3, 5]]).unwrap();
        for pool in [Pool::Mean, Pool::Max, Pool::Min] {
            let mut tape = crate::nn::Tape::new();
            let x = tape.constant(e.clone());
            let y = tape.segment_pool(x, split.all_members().to_vec().into(), pool);
            let direct = pool_clusters(&e, &split, pool).unwrap();
            for (a, b) in tape.value(y).data().iter().zip(direct.sigma.data()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn pools_agree_iff_rows_equal(seed in 0u64..500, equal in any::<bool>()) {
            let mut e = embs(4, 3, seed);
            if equal {
                let r = e.row(0).to_vec();
                for i in 1..4 {
                    e.row_mut(i).copy_from_slice(&r);
                }
            }
            let split = ClusterSplit::from_members(4, vec![vec![0, 1, 2, 3]]).unwrap();
            let mx = pool_clusters(&e, &split, Pool::Max).unwrap();
            let mn = pool_clusters(&e, &split, Pool::Min).unwrap();
            let me = pool_clusters(&e, &split, Pool::Mean).unwrap();
            let agree = mx.sigma.data().iter().zip(mn.sigma.data()).all(|(a, b)| a == b)
                && me.sigma.data().iter().zip(mx.sigma.data()).all(|(a, b)| (a - b).abs() < 1e-15);
            prop_assert_eq!(agree, equal);
        }

        #[test]
        fn pooling_is_local(seed in 0u64..500, row in 0usize..6) {
            let e = embs(6, 3, seed);
            let split = ClusterSplit::from_members(6, vec![vec![0, 1], vec![2, 3, 4], vec![5]]).unwrap();
            let before = pool_clusters(&e, &split, Pool::Mean).unwrap();
            let mut f = e.clone();
            f.row_mut(row).iter_mut().for_each(|x| *x += 1.0);
            let after = pool_clusters(&f, &split, Pool::Mean).unwrap();
            let owner = split.assignment()[row];
            for c in 0..3 {
                if c != owner {
                    prop_assert_eq!(before.sigma.row(c), after.sigma.row(c));
                }
            }
        }

        #[test]
        fn proposals_preserve_optimum(seed in 0u64..40) {
            let lp = lp(seed, 4, 9);
            let params = small_params(seed);
            let s = propose_permutation(&lp, &params, &cfg(3), ProposalMode::Sample, seed).unwrap();
            let inst = PreparedInstance::new(&lp, 3, SplitMethod::ContiguousBlocks).unwrap();
            let expanded: Vec<usize> = s.cluster_perm.iter().flat_map(|&c| inst.split.members(c).to_vec()).collect();
            prop_assert_eq!(expanded.as_slice(), s.column_perm.as_slice());
            let base = solve(&lp, &SolverConfig::default());
            let permuted = crate::lp::apply_permutation(&lp, &s.column_perm).unwrap();
            let re = solve(&permuted, &SolverConfig::default());
            prop_assert_eq!(base.1.status, SolveStatus::Optimal);
            prop_assert_eq!(re.1.status, SolveStatus::Optimal);
            prop_assert!((base.0.objective - re.0.objective).abs() <= 1e-6);
        }
    }

    #[test]
    fn single_cluster_gives_identity() {
        let lp = lp(3, 4, 8);
        let s = propose_permutation(&lp, &small_params(3), &cfg(1), ProposalMode::Sample, 9).unwrap();
        assert!(s.column_perm.is_identity());
        assert_eq!(s.log_prob, 0.0);
    }

    #[test]
    fn sampling_reproducible_and_greedy_seed_free() {
        let lp = lp(4, 5, 10);
        let params = small_params(4);
        let a = propose_permutation(&lp, &params, &cfg(4), ProposalMode::Sample, 77).unwrap();
        let b = propose_permutation(&lp, &params, &cfg(4), ProposalMode::Sample, 77).unwrap();
        assert_eq!(a, b);
        let g1 = propose_permutation(&lp, &params, &cfg(4), ProposalMode::Greedy, 1).unwrap();
        let g2 = propose_permutation(&lp, &params, &cfg(4), ProposalMode::Greedy, 2).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn k_shot_is_monotone_in_nested_seeds() {
        let env = BuiltinSimplex;
        for seed in 0..5 {
            let lp = lp(100 + seed, 6, 12);
            let params = small_params(seed);
            let one = k_shot_reformulate(&env, &lp, &params, 1, &cfg(4), 10).unwrap();
            let three = k_shot_reformulate(&env, &lp, &params, 3, &cfg(4), 10).unwrap();
            assert_eq!(one.best, one.all[0]);
            assert_eq!(one.all[0].cluster_perm, three.all[0].cluster_perm);
            assert!(three.best_metric() <= one.best_metric());
            let report = ReformulationReport::new(&lp, &three);
            assert_eq!(report.shot_iterations.len(), 3);
            assert!((report.ratio * report.baseline_iterations.max(1.0) - three.best_metric()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_shots_rejected() {
        let lp = lp(5, 3, 6);
        assert!(k_shot_reformulate(&BuiltinSimplex, &lp, &small_params(1), 0, &cfg(2), 0).is_err());
    }
}

//! Synthetic scenario generators and dataset splitting.
//!
//! Every scenario produces LP relaxations directly. Instances of one scenario
//! share their row-sense pattern and column naming scheme and differ in
//! coefficients (and, for some scenarios, dimensions).

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{write_mps, LpBuilder, LpInstance, RowSense};
use crate::simplex::{solve, SolveStatus, SolverConfig};

const MAX_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Scenario {
    /// Multi-dimensional multi-knapsack placement of items into bins with a
    /// per-dimension imbalance penalty.
    ItemPlacement { items: usize, bins: usize, dims: usize },
    /// Bin packing with apportionment: streams are split over workers so
    /// that no worker carries more than half of any stream.
    Apportionment { streams: usize, workers: usize },
    /// Multi-period production planning with inventory balance rows.
    PlanningChain { products: usize, periods: usize },
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::ItemPlacement { .. } => "item_placement",
            Scenario::Apportionment { .. } => "apportionment",
            Scenario::PlanningChain { .. } => "planning_chain",
        }
    }
}

/// Coefficient ranges shared by the generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoefficientSpec {
    /// Costs are log-uniform integers in `1..=cost_max`.
    pub cost_max: u32,
    /// Weights and demands are uniform integers in `1..=weight_max`.
    pub weight_max: u32,
    /// Capacity slack factor range applied to the average load.
    pub capacity_slack: (f64, f64),
    /// Relative jitter of the dimensions for scenarios with varying size.
    pub size_jitter: f64,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self {
            cost_max: 20,
            weight_max: 20,
            capacity_slack: (1.1, 1.5),
            size_jitter: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    pub seed: u64,
    pub instance_count: usize,
    #[serde(default = "default_fractions")]
    pub split_fractions: [f64; 3],
}

fn default_fractions() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, seed: u64, instance_count: usize) -> Self {
        Self {
            scenario,
            coefficients: CoefficientSpec::default(),
            seed,
            instance_count,
            split_fractions: default_fractions(),
        }
    }

    /// The desk-scale item placement scenario (30 items, 5 bins, 2 dims).
    pub fn desk_item_placement(seed: u64, instance_count: usize) -> Self {
        Self::new(
            Scenario::ItemPlacement {
                items: 30,
                bins: 5,
                dims: 2,
            },
            seed,
            instance_count,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.scenario {
            Scenario::ItemPlacement { items, bins, dims } => items > 0 && bins > 0 && dims > 0,
            Scenario::Apportionment { streams, workers } => streams > 0 && workers >= 2,
            Scenario::PlanningChain { products, periods } => products > 0 && periods > 0,
        };
        if !ok {
            return Err(Error::Config(format!(
                "invalid scenario dimensions {:?}",
                self.scenario
            )));
        }
        let c = &self.coefficients;
        if c.cost_max == 0 || c.weight_max == 0 {
            return Err(Error::Config("cost_max and weight_max must be positive".into()));
        }
        if !(c.capacity_slack.0 >= 1.0 && c.capacity_slack.1 >= c.capacity_slack.0) {
            return Err(Error::Config("capacity_slack must satisfy 1 <= lo <= hi".into()));
        }
        if !(0.0..1.0).contains(&c.size_jitter) {
            return Err(Error::Config("size_jitter must lie in [0, 1)".into()));
        }
        check_fractions(self.split_fractions)
    }
}

/// Seed of instance `index`, attempt `attempt`, derived from the spec seed.
pub fn instance_seed(seed: u64, index: usize, attempt: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((index as u64) << 8) | attempt as u64);
    rng.gen()
}

fn log_uniform_int(rng: &mut impl Rng, max: u32) -> f64 {
    if max <= 1 {
        return 1.0;
    }
    let v = rng.gen_range(0.0..(max as f64).ln()).exp().round();
    v.clamp(1.0, max as f64)
}

fn uniform_int(rng: &mut impl Rng, max: u32) -> f64 {
    rng.gen_range(1..=max) as f64
}

fn jitter(rng: &mut impl Rng, base: usize, frac: f64, min: usize) -> usize {
    let spread = (base as f64 * frac).floor() as i64;
    let v = base as i64 + rng.gen_range(-spread..=spread);
    (v.max(min as i64)) as usize
}

fn item_placement(
    name: String,
    rng: &mut impl Rng,
    items: usize,
    bins: usize,
    dims: usize,
    coef: &CoefficientSpec,
) -> Result<LpInstance> {
    let mut b = LpBuilder::new(name);
    let weights: Vec<Vec<f64>> = (0..items)
        .map(|_| (0..dims).map(|_| uniform_int(rng, coef.weight_max)).collect())
        .collect();
    let costs: Vec<Vec<f64>> = (0..items)
        .map(|_| (0..bins).map(|_| log_uniform_int(rng, coef.cost_max)).collect())
        .collect();
    let penalties: Vec<f64> = (0..dims).map(|_| log_uniform_int(rng, coef.cost_max)).collect();

    // Bin-major layout: all placement columns of bin 0, then bin 1, ...
    let mut x = vec![vec![0usize; bins]; items];
    for j in 0..bins {
        for (i, row) in x.iter_mut().enumerate() {
            row[j] = b.add_col(format!("x{i}_{j}"), costs[i][j], 0.0, 1.0);
        }
    }
    let y: Vec<Vec<usize>> = (0..bins)
        .map(|j| {
            (0..dims)
                .map(|r| b.add_col(format!("y{j}_{r}"), 0.0, 0.0, f64::INFINITY))
                .collect()
        })
        .collect();
    let z: Vec<usize> = (0..dims)
        .map(|r| b.add_col(format!("z{r}"), penalties[r], 0.0, f64::INFINITY))
        .collect();

    for (i, row) in x.iter().enumerate() {
        let entries: Vec<(usize, f64)> = row.iter().map(|&c| (c, 1.0)).collect();
        b.add_row(format!("assign{i}"), RowSense::Eq, 1.0, &entries);
    }
    for r in 0..dims {
        let total: f64 = weights.iter().map(|w| w[r]).sum();
        let mean = total / bins as f64;
        for j in 0..bins {
            let slack = rng.gen_range(coef.capacity_slack.0..=coef.capacity_slack.1);
            let cap = (mean * slack).ceil();
            let entries: Vec<(usize, f64)> = (0..items).map(|i| (x[i][j], weights[i][r])).collect();
            b.add_row(format!("cap{j}_{r}"), RowSense::Le, cap, &entries);
        }
    }
    for r in 0..dims {
        let total: f64 = weights.iter().map(|w| w[r]).sum();
        let target = (total / bins as f64).floor();
        for j in 0..bins {
            let mut entries: Vec<(usize, f64)> =
                (0..items).map(|i| (x[i][j], weights[i][r])).collect();
            entries.push((y[j][r], -1.0));
            b.add_row(format!("imb{j}_{r}"), RowSense::Le, target, &entries);
        }
    }
    for r in 0..dims {
        for j in 0..bins {
            b.add_row(
                format!("link{j}_{r}"),
                RowSense::Le,
                0.0,
                &[(y[j][r], 1.0), (z[r], -1.0)],
            );
        }
    }
    b.build()
}

fn apportionment(
    name: String,
    rng: &mut impl Rng,
    streams: usize,
    workers: usize,
    coef: &CoefficientSpec,
) -> Result<LpInstance> {
    let streams = jitter(rng, streams, coef.size_jitter, 1);
    let workers = jitter(rng, workers, coef.size_jitter, 2);
    let demand: Vec<f64> = (0..streams).map(|_| uniform_int(rng, coef.weight_max)).collect();
    let total: f64 = demand.iter().sum();
    let max_demand = demand.iter().cloned().fold(0.0, f64::max);

    let mut b = LpBuilder::new(name);
    let x: Vec<Vec<usize>> = (0..streams)
        .map(|s| {
            (0..workers)
                .map(|w| {
                    let cost = log_uniform_int(rng, coef.cost_max);
                    b.add_col(format!("x{s}_{w}"), cost, 0.0, 0.5)
                })
                .collect()
        })
        .collect();
    let u: Vec<usize> = (0..workers)
        .map(|w| {
            let cost = 10.0 * log_uniform_int(rng, coef.cost_max);
            b.add_col(format!("u{w}"), cost, 0.0, 1.0)
        })
        .collect();

    for (s, row) in x.iter().enumerate() {
        let entries: Vec<(usize, f64)> = row.iter().map(|&c| (c, 1.0)).collect();
        b.add_row(format!("stream{s}"), RowSense::Eq, 1.0, &entries);
    }
    for w in 0..workers {
        let slack = rng.gen_range(coef.capacity_slack.0..=coef.capacity_slack.1);
        let cap = (total / workers as f64 * slack).ceil().max(max_demand);
        let mut entries: Vec<(usize, f64)> = (0..streams).map(|s| (x[s][w], demand[s])).collect();
        entries.push((u[w], -cap));
        b.add_row(format!("load{w}"), RowSense::Le, 0.0, &entries);
    }
    for (s, row) in x.iter().enumerate() {
        for (w, &c) in row.iter().enumerate() {
            b.add_row(
                format!("open{s}_{w}"),
                RowSense::Le,
                0.0,
                &[(c, 1.0), (u[w], -0.5)],
            );
        }
    }
    b.build()
}

fn planning_chain(
    name: String,
    rng: &mut impl Rng,
    products: usize,
    periods: usize,
    coef: &CoefficientSpec,
) -> Result<LpInstance> {
    let products = jitter(rng, products, coef.size_jitter, 1);
    let periods = jitter(rng, periods, coef.size_jitter, 1);
    let usage: Vec<f64> = (0..products).map(|_| uniform_int(rng, 5)).collect();
    let demand: Vec<Vec<f64>> = (0..products)
        .map(|_| (0..periods).map(|_| uniform_int(rng, coef.weight_max)).collect())
        .collect();
    let unmet_cost = 5.0 * coef.cost_max as f64;

    let mut b = LpBuilder::new(name);
    let mut make = vec![vec![0usize; periods]; products];
    let mut stock = vec![vec![0usize; periods]; products];
    let mut short = vec![vec![0usize; periods]; products];
    for p in 0..products {
        for t in 0..periods {
            let cost = log_uniform_int(rng, coef.cost_max);
            make[p][t] = b.add_col(format!("make{p}_{t}"), cost, 0.0, f64::INFINITY);
            stock[p][t] = b.add_col(format!("stock{p}_{t}"), 1.0, 0.0, f64::INFINITY);
            short[p][t] = b.add_col(format!("short{p}_{t}"), unmet_cost, 0.0, f64::INFINITY);
        }
    }
    for p in 0..products {
        for t in 0..periods {
            let mut entries = vec![(make[p][t], 1.0), (stock[p][t], -1.0), (short[p][t], 1.0)];
            if t > 0 {
                entries.push((stock[p][t - 1], 1.0));
            }
            b.add_row(format!("bal{p}_{t}"), RowSense::Eq, demand[p][t], &entries);
        }
    }
    for t in 0..periods {
        let load: f64 = (0..products).map(|p| usage[p] * demand[p][t]).sum();
        let slack = rng.gen_range(0.7..=coef.capacity_slack.1);
        let cap = (load * slack).ceil();
        let entries: Vec<(usize, f64)> = (0..products).map(|p| (make[p][t], usage[p])).collect();
        b.add_row(format!("capa{t}"), RowSense::Le, cap, &entries);
    }
    b.build()
}

/// Random box-bounded LP that is feasible by construction: every row holds
/// at an integer interior point `x0`.
pub fn random_lp(rng: &mut impl Rng, name: impl Into<String>, m: usize, n: usize) -> LpInstance {
    let mut b = LpBuilder::new(name);
    let mut x0 = Vec::with_capacity(n);
    for j in 0..n {
        let upper = rng.gen_range(1..=6) as f64;
        x0.push(rng.gen_range(0..=upper as i64) as f64);
        let cost = rng.gen_range(-9..=9) as f64;
        b.add_col(format!("x{j}"), cost, 0.0, upper);
    }
    for i in 0..m {
        let mut entries = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                let v = rng.gen_range(-5..=5) as f64;
                if v != 0.0 {
                    entries.push((j, v));
                }
            }
        }
        let activity: f64 = entries.iter().map(|&(j, v)| v * x0[j]).sum();
        let (sense, rhs) = match rng.gen_range(0..5) {
            0 => (RowSense::Eq, activity),
            1 | 2 => (RowSense::Ge, activity - rng.gen_range(0..=3) as f64),
            _ => (RowSense::Le, activity + rng.gen_range(0..=3) as f64),
        };
        b.add_row(format!("r{i}"), sense, rhs, &entries);
    }
    b.build().expect("generated LP is structurally valid")
}

fn build_instance(spec: &ScenarioSpec, name: String, seed: u64) -> Result<LpInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef = &spec.coefficients;
    match spec.scenario {
        Scenario::ItemPlacement { items, bins, dims } => {
            item_placement(name, &mut rng, items, bins, dims, coef)
        }
        Scenario::Apportionment { streams, workers } => {
            apportionment(name, &mut rng, streams, workers, coef)
        }
        Scenario::PlanningChain { products, periods } => {
            planning_chain(name, &mut rng, products, periods, coef)
        }
    }
}

/// One generated instance together with the seed that produced it.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub lp: LpInstance,
    pub seed: u64,
}

/// Generates instance `index` of `spec`, retrying with fresh seeds until the
/// identity ordering solves to optimality with at least one iteration.
pub fn generate_instance(
    spec: &ScenarioSpec,
    index: usize,
    solver: &SolverConfig,
) -> Result<GeneratedInstance> {
    let mut reason = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        let seed = instance_seed(spec.seed, index, attempt);
        let name = format!("{}_{index:05}", spec.scenario.label());
        let lp = build_instance(spec, name, seed)?;
        let (_, metrics) = solve(&lp, solver);
        if metrics.status == SolveStatus::Optimal && metrics.iterations >= 1 {
            return Ok(GeneratedInstance { lp, seed });
        }
        reason = format!("status {:?}, {} iterations", metrics.status, metrics.iterations);
        log::warn!("instance {index} attempt {attempt} rejected: {reason}");
    }
    Err(Error::GenerationFailed {
        attempts: MAX_ATTEMPTS,
        reason,
    })
}

/// Generates every instance of `spec` (in parallel, returned in index order).
pub fn generate(spec: &ScenarioSpec, solver: &SolverConfig) -> Result<Vec<GeneratedInstance>> {
    spec.validate()?;
    (0..spec.instance_count)
        .into_par_iter()
        .map(|i| generate_instance(spec, i, solver))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    /// Path relative to the manifest's directory.
    pub path: PathBuf,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ScenarioSpec,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn with_split(&self, tag: SplitTag) -> Manifest {
        Manifest {
            spec: self.spec.clone(),
            entries: self
                .entries
                .iter()
                .filter(|e| e.split == Some(tag))
                .cloned()
                .collect(),
        }
    }
}

/// Writes the instances as MPS files under `dir` and returns their manifest.
pub fn write_dataset(
    spec: &ScenarioSpec,
    instances: &[GeneratedInstance],
    dir: &Path,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(instances.len());
    for inst in instances {
        let file = PathBuf::from(format!("{}.mps", inst.lp.name));
        write_mps(&inst.lp, &dir.join(&file))?;
        entries.push(ManifestEntry {
            name: inst.lp.name.clone(),
            path: file,
            seed: inst.seed,
            rows: inst.lp.num_rows(),
            cols: inst.lp.num_cols(),
            nnz: inst.lp.nnz(),
            split: None,
        });
    }
    Ok(Manifest {
        spec: spec.clone(),
        entries,
    })
}

fn check_fractions(f: [f64; 3]) -> Result<()> {
    let sum: f64 = f.iter().sum();
    if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadFractions(f));
    }
    Ok(())
}

/// Seeded shuffle split into (train, val, test). Train and validation sizes
/// are `floor(n * fraction)`; the test split takes the remainder.
pub fn split_dataset(
    manifest: &Manifest,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Manifest, Manifest, Manifest)> {
    check_fractions(fractions)?;
    let n = manifest.entries.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * fractions[0] + 1e-9).floor() as usize;
    let n_val = (((n as f64) * fractions[1] + 1e-9).floor() as usize).min(n - n_train);
    let pick = |idx: &[usize], tag: SplitTag| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        Manifest {
            spec: manifest.spec.clone(),
            entries: idx
                .iter()
                .map(|&i| ManifestEntry {
                    split: Some(tag),
                    ..manifest.entries[i].clone()
                })
                .collect(),
        }
    };
    Ok((
        pick(&order[..n_train], SplitTag::Train),
        pick(&order[n_train..n_train + n_val], SplitTag::Val),
        pick(&order[n_train + n_val..], SplitTag::Test),
    ))
}

/// Reads every instance of a manifest stored in `dir`.
pub fn load_instances(manifest: &Manifest, dir: &Path) -> Result<Vec<LpInstance>> {
    manifest
        .entries
        .iter()
        .map(|e| crate::lp::read_mps(&dir.join(&e.path)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn item_placement_matches_reference_shape() {
        let spec = ScenarioSpec::new(
            Scenario::ItemPlacement {
                items: 105,
                bins: 10,
                dims: 3,
            },
            7,
            1,
        );
        let lp = build_instance(&spec, "bip".into(), 1).unwrap();
        assert_eq!((lp.num_rows(), lp.num_cols(), lp.nnz()), (195, 1083, 7440));
    }

    #[test]
    fn desk_item_placement_is_small_and_solvable() {
        let spec = ScenarioSpec::desk_item_placement(3, 2);
        let out = generate(&spec, &SolverConfig::default()).unwrap();
        for g in &out {
            assert_eq!((g.lp.num_rows(), g.lp.num_cols()), (60, 162));
            let (_, met) = solve(&g.lp, &SolverConfig::default());
            assert_eq!(met.status, SolveStatus::Optimal);
        }
    }

    #[test]
    fn other_scenarios_solve() {
        let specs = [
            Scenario::Apportionment {
                streams: 12,
                workers: 4,
            },
            Scenario::PlanningChain {
                products: 4,
                periods: 6,
            },
        ];
        for s in specs {
            let spec = ScenarioSpec::new(s, 11, 3);
            let out = generate(&spec, &SolverConfig::default()).unwrap();
            assert_eq!(out.len(), 3);
            let senses = &out[0].lp.row_sense;
            // dimensions vary but the leading row-sense pattern is shared
            let k = out.iter().map(|g| g.lp.num_rows()).min().unwrap().min(3);
            assert!(out.iter().all(|g| g.lp.row_sense[..k] == senses[..k]));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = ScenarioSpec::desk_item_placement(5, 2);
        let a = generate(&spec, &SolverConfig::default()).unwrap();
        let b = generate(&spec, &SolverConfig::default()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(
                crate::lp::format_mps(&x.lp).unwrap(),
                crate::lp::format_mps(&y.lp).unwrap()
            );
        }
    }

    fn manifest(n: usize) -> Manifest {
        Manifest {
            spec: ScenarioSpec::desk_item_placement(0, n),
            entries: (0..n)
                .map(|i| ManifestEntry {
                    name: format!("i{i}"),
                    path: format!("i{i}.mps").into(),
                    seed: i as u64,
                    rows: 1,
                    cols: 1,
                    nnz: 1,
                    split: None,
                })
                .collect(),
        }
    }

    #[test]
    fn split_sizes() {
        let (tr, va, te) = split_dataset(&manifest(10), [0.8, 0.1, 0.1], 1).unwrap();
        assert_eq!((tr.entries.len(), va.entries.len(), te.entries.len()), (8, 1, 1));
        let mut names: Vec<_> = tr
            .entries
            .iter()
            .chain(&va.entries)
            .chain(&te.entries)
            .map(|e| e.name.clone())
            .collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 10);

        let (tr, va, te) = split_dataset(&manifest(10), [1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!((tr.entries.len(), va.entries.len(), te.entries.len()), (10, 0, 0));

        let again = split_dataset(&manifest(10), [0.8, 0.1, 0.1], 1).unwrap();
        assert_eq!(again.0, split_dataset(&manifest(10), [0.8, 0.1, 0.1], 1).unwrap().0);
    }

    #[test]
    fn bad_fractions() {
        assert!(matches!(
            split_dataset(&manifest(3), [0.5, 0.1, 0.1], 0),
            Err(Error::BadFractions(_))
        ));
        assert!(split_dataset(&manifest(3), [1.2, -0.1, -0.1], 0).is_err());
    }

    #[test]
    fn random_lp_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for t in 0..30 {
            let lp = random_lp(&mut rng, format!("r{t}"), 5, 8);
            let (_, met) = solve(&lp, &SolverConfig::default());
            assert_eq!(met.status, SolveStatus::Optimal, "instance {t}");
        }
    }
}

//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use lpreform_core::datagen::{
    generate, load_instances, split_dataset, Manifest, Scenario, ScenarioSpec, SplitTag,
};
use lpreform_core::lp::{emit_sparsity_image, read_mps, write_mps, apply_permutation, LpInstance};
use lpreform_core::nn::PolicyParams;
use lpreform_core::reformulate::{
    k_shot_reformulate, split_variables, ProposalMode, ReformulateConfig, ReformulationReport,
};
use lpreform_core::simplex::{solve, BuiltinSimplex, SolverConfig};
use lpreform_core::training::{
    brute_force_oracle, evaluate, train, write_eval_csv, EvalConfig, IdentityProposer,
    PolicyProposer, Proposer, TrainConfig, TrainOutput, TrainState, UniformProposer,
};
use lpreform_core::Error as CoreError;

use crate::config::{overlay, EffectiveConfig, FileConfig};
use crate::{
    Cli, Command, EvaluateArgs, GenerateArgs, GlobalArgs, OracleArgs, ProposerArg, ReformulateArgs,
    ScenarioArg, SolveArgs, SplitTagArg, TrainArgs,
};

/// Largest image side for sparsity plots.
const IMAGE_MAX_DIM: usize = 512;

pub fn error_kind(e: &CoreError) -> &'static str {
    match e {
        CoreError::Parse { .. } => "Parse",
        CoreError::UnsupportedFeature { .. } => "UnsupportedFeature",
        CoreError::Io { .. } => "Io",
        CoreError::DimensionMismatch(_) => "DimensionMismatch",
        CoreError::InvalidPermutation(_) => "InvalidPermutation",
        CoreError::InvalidLp(_) => "InvalidLp",
        CoreError::InvalidK { .. } => "InvalidK",
        CoreError::EmptyCluster(_) => "EmptyCluster",
        CoreError::NonFinite(_) => "NonFinite",
        CoreError::NonOptimalStatus(_) => "NonOptimalStatus",
        CoreError::AllSolvesFailed => "AllSolvesFailed",
        CoreError::TooManyPermutations { .. } => "TooManyPermutations",
        CoreError::GenerationFailed { .. } => "GenerationFailed",
        CoreError::BadFractions(_) => "BadFractions",
        CoreError::Checkpoint(_) => "Checkpoint",
        CoreError::Json(_) => "Json",
        CoreError::Config(_) => "Config",
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(jobs) = g.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let file = FileConfig::load(g.config.as_deref())?;
    match &cli.command {
        Command::Solve(a) => return cmd_solve(g, &file, a),
        _ => create_dir(&g.out_dir)?,
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(g, &file, &a),
        Command::Solve(_) => unreachable!("handled above"),
        Command::Train(a) => cmd_train(g, &file, &a),
        Command::Reformulate(a) => cmd_reformulate(g, &file, &a),
        Command::Evaluate(a) => cmd_evaluate(g, &file, &a),
        Command::Oracle(a) => cmd_oracle(g, &file, &a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn solver_config(file: &FileConfig) -> Result<SolverConfig> {
    let cfg = overlay(SolverConfig::default(), file.solver.as_ref())?;
    cfg.validate()?;
    Ok(cfg)
}

fn reformulate_config(g: &GlobalArgs, file: &FileConfig) -> Result<ReformulateConfig> {
    let base = ReformulateConfig {
        k_clusters: lpreform_core::training::TrainConfig::profile(g.profile.into()).k_clusters,
        solver: solver_config(file)?,
        ..Default::default()
    };
    let mut cfg = overlay(base, file.reformulate.as_ref())?;
    if let Some(k) = g.clusters {
        cfg.k_clusters = k;
    }
    if let Some(p) = g.pool {
        cfg.pool = p.into();
    }
    if let Some(s) = g.split_method {
        cfg.split_method = s.into();
    }
    if let Some(m) = g.metric {
        cfg.metric = m.into();
    }
    Ok(cfg)
}

fn train_config(g: &GlobalArgs, file: &FileConfig, a: Option<&TrainArgs>) -> Result<TrainConfig> {
    let base = TrainConfig {
        solver: solver_config(file)?,
        ..TrainConfig::profile(g.profile.into())
    };
    let mut cfg = overlay(base, file.training.as_ref())?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(k) = g.clusters {
        cfg.k_clusters = k;
    }
    if let Some(p) = g.pool {
        cfg.pool = p.into();
    }
    if let Some(s) = g.split_method {
        cfg.split_method = s.into();
    }
    if let Some(m) = g.metric {
        cfg.metric = m.into();
    }
    if let Some(k) = g.k_shots {
        cfg.k_shot_eval = k;
    }
    if let Some(a) = a {
        if let Some(s) = a.steps {
            cfg.steps = s;
        }
        if let Some(b) = a.batch_size {
            cfg.batch_size = b;
        }
        if let Some(lr) = a.lr {
            cfg.lr = lr;
        }
        if let Some(r) = a.reward_mode {
            cfg.reward_mode = r.into();
        }
        if a.wall_time {
            cfg.record_wall_time = true;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_generate(g: &GlobalArgs, file: &FileConfig, a: &GenerateArgs) -> Result<()> {
    let scenario = match a.scenario {
        ScenarioArg::ItemPlacement => Scenario::ItemPlacement {
            items: a.items.unwrap_or(30),
            bins: a.bins.unwrap_or(5),
            dims: a.dims.unwrap_or(2),
        },
        ScenarioArg::Apportionment => Scenario::Apportionment {
            streams: a.streams.unwrap_or(20),
            workers: a.workers.unwrap_or(6),
        },
        ScenarioArg::PlanningChain => Scenario::PlanningChain {
            products: a.products.unwrap_or(6),
            periods: a.periods.unwrap_or(8),
        },
    };
    let mut spec = overlay(ScenarioSpec::new(scenario.clone(), 0, 500), file.datagen.as_ref())?;
    if file.datagen.as_ref().is_none_or(|t| !t.contains_key("scenario")) {
        spec.scenario = scenario;
    }
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    if let Some(c) = a.count {
        spec.instance_count = c;
    }
    if let Some(f) = &a.fractions {
        let [train, val, test] = f[..] else {
            bail!("--fractions takes three comma-separated values, got {}", f.len());
        };
        spec.split_fractions = [train, val, test];
    }
    let solver = solver_config(file)?;
    spec.validate()?;
    let instances = generate(&spec, &solver)?;
    let data_dir = g.out_dir.join("dataset");
    let manifest = lpreform_core::datagen::write_dataset(&spec, &instances, &data_dir)?;
    let (train, val, test) = split_dataset(&manifest, spec.split_fractions, spec.seed)?;
    let mut tagged = manifest.clone();
    for part in [&train, &val, &test] {
        for e in &part.entries {
            if let Some(t) = tagged.entries.iter_mut().find(|x| x.name == e.name) {
                t.split = e.split;
            }
        }
    }
    tagged.write(&data_dir.join("manifest.json"))?;
    EffectiveConfig {
        command: "generate".into(),
        datagen: Some(spec),
        solver: Some(solver),
        ..Default::default()
    }
    .write(&g.out_dir)?;
    println!(
        "{}",
        serde_json::json!({
            "manifest": data_dir.join("manifest.json"),
            "train": train.entries.len(),
            "val": val.entries.len(),
            "test": test.entries.len(),
        })
    );
    Ok(())
}

#[derive(Serialize)]
struct SolveReport<'a> {
    instance: &'a str,
    rows: usize,
    cols: usize,
    nnz: usize,
    objective: f64,
    #[serde(flatten)]
    metrics: lpreform_core::simplex::SolveMetrics,
}

fn cmd_solve(_g: &GlobalArgs, file: &FileConfig, a: &SolveArgs) -> Result<()> {
    let lp = read_mps(&a.mps)?;
    let solver = solver_config(file)?;
    let (sol, metrics) = solve(&lp, &solver);
    let report = SolveReport {
        instance: &lp.name,
        rows: lp.num_rows(),
        cols: lp.num_cols(),
        nnz: lp.nnz(),
        objective: sol.objective,
        metrics,
    };
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

/// Manifest entries of `tag` (every entry for `All`, or when none is tagged).
fn select(manifest: &Manifest, tag: SplitTagArg) -> Manifest {
    let tag = match tag {
        SplitTagArg::All => return manifest.clone(),
        SplitTagArg::Train => SplitTag::Train,
        SplitTagArg::Val => SplitTag::Val,
        SplitTagArg::Test => SplitTag::Test,
    };
    if manifest.entries.iter().all(|e| e.split.is_none()) {
        return manifest.clone();
    }
    manifest.with_split(tag)
}

fn load_split(path: &Path, tag: SplitTagArg) -> Result<Vec<LpInstance>> {
    let manifest = Manifest::read(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok(load_instances(&select(&manifest, tag), &dir)?)
}

fn cmd_train(g: &GlobalArgs, file: &FileConfig, a: &TrainArgs) -> Result<()> {
    let mut cfg = train_config(g, file, Some(a))?;
    let resume = match &a.resume {
        Some(path) => {
            let (state, saved) = TrainState::from_checkpoint(&lpreform_core::nn::Checkpoint::read(path)?)?;
            if saved.network != cfg.network || saved.seed != cfg.seed {
                bail!("checkpoint {} was trained with a different network or seed", path.display());
            }
            cfg.record_wall_time = saved.record_wall_time;
            Some(state)
        }
        None => None,
    };
    let instances = load_split(&a.data, SplitTagArg::Train)?;
    EffectiveConfig {
        command: "train".into(),
        training: Some(cfg.clone()),
        ..Default::default()
    }
    .write(&g.out_dir)?;
    let out = TrainOutput {
        dir: Some(g.out_dir.clone()),
    };
    let state = train(&BuiltinSimplex, &cfg, &instances, &out, resume)?;
    let last = state.log.last().context("training produced no steps")?;
    println!(
        "{}",
        serde_json::json!({
            "steps": state.step,
            "final_mean_reward": last.mean_reward,
            "final_critic_loss": last.critic_loss,
            "checkpoint": g.out_dir.join(lpreform_core::training::FINAL_CHECKPOINT),
        })
    );
    Ok(())
}

fn load_params(g: &GlobalArgs, file: &FileConfig, checkpoint: Option<&Path>) -> Result<PolicyParams> {
    match checkpoint {
        Some(path) => Ok(TrainState::load_policy(path)?),
        None => {
            let cfg = train_config(g, file, None)?;
            log::warn!("no checkpoint given; using an untrained policy");
            Ok(PolicyParams::new(cfg.network, cfg.seed))
        }
    }
}

fn cmd_reformulate(g: &GlobalArgs, file: &FileConfig, a: &ReformulateArgs) -> Result<()> {
    let lp = read_mps(&a.mps)?;
    let cfg = reformulate_config(g, file)?;
    let params = load_params(g, file, a.checkpoint.as_deref())?;
    let k_shots = g.k_shots.unwrap_or(3);
    let result = k_shot_reformulate(&BuiltinSimplex, &lp, &params, k_shots, &cfg, g.seed.unwrap_or(0))?;
    let reordered = apply_permutation(&lp, &result.best.column_perm)?;
    let stem = a.mps.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
    write_mps(&reordered, g.out_dir.join(format!("{stem}.reformulated.mps")))?;
    let report = ReformulationReport::new(&lp, &result);
    write_json(&g.out_dir.join(format!("{stem}.report.json")), &report)?;
    if a.images {
        emit_sparsity_image(&lp, g.out_dir.join(format!("{stem}.original.pgm")), IMAGE_MAX_DIM)?;
        emit_sparsity_image(&reordered, g.out_dir.join(format!("{stem}.reformulated.pgm")), IMAGE_MAX_DIM)?;
    }
    EffectiveConfig {
        command: "reformulate".into(),
        reformulate: Some(cfg),
        ..Default::default()
    }
    .write(&g.out_dir)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_evaluate(g: &GlobalArgs, file: &FileConfig, a: &EvaluateArgs) -> Result<()> {
    let rcfg = reformulate_config(g, file)?;
    let base = EvalConfig {
        k_clusters: rcfg.k_clusters,
        split_method: rcfg.split_method,
        solver: rcfg.solver.clone(),
        ..Default::default()
    };
    let mut cfg = overlay(base, file.evaluate.as_ref())?;
    if let Some(k) = g.k_shots {
        cfg.k_shots = k;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(k) = g.clusters {
        cfg.k_clusters = k;
    }
    cfg.record_time |= a.record_time;
    let instances = load_split(&a.data, a.split)?;
    let params;
    let proposer: Box<dyn Proposer> = match a.proposer {
        ProposerArg::Policy => {
            params = load_params(g, file, a.checkpoint.as_deref())?;
            Box::new(PolicyProposer {
                params: &params,
                pool: rcfg.pool,
                mode: ProposalMode::Sample,
            })
        }
        ProposerArg::Uniform => Box::new(UniformProposer),
        ProposerArg::Identity => Box::new(IdentityProposer),
    };
    let report = evaluate(&BuiltinSimplex, &instances, proposer.as_ref(), &cfg)?;
    write_eval_csv(&report, &g.out_dir.join("eval_rows.csv"), &g.out_dir.join("eval_cdf.csv"))?;
    let summary = serde_json::json!({
        "evaluated": report.evaluated,
        "failed": report.failed,
        "mean_ratio": report.mean_ratio,
        "improved_fraction": report.improved_fraction,
        "mean_iteration_reduction": report.mean_iteration_reduction,
        "stderr_iteration_reduction": report.stderr_iteration_reduction,
        "mean_time_reduction": report.mean_time_reduction,
        "stderr_time_reduction": report.stderr_time_reduction,
    });
    write_json(&g.out_dir.join("eval_summary.json"), &summary)?;
    EffectiveConfig {
        command: "evaluate".into(),
        evaluate: Some(cfg),
        ..Default::default()
    }
    .write(&g.out_dir)?;
    println!("{summary}");
    Ok(())
}

fn cmd_oracle(g: &GlobalArgs, file: &FileConfig, a: &OracleArgs) -> Result<()> {
    let lp = read_mps(&a.mps)?;
    let cfg = reformulate_config(g, file)?;
    let split = split_variables(&lp, cfg.k_clusters, cfg.split_method)?;
    let table = brute_force_oracle(&BuiltinSimplex, &lp, &split, cfg.metric, &cfg.solver)?;
    let path = g.out_dir.join("oracle.csv");
    let mut text = String::from("cluster_perm,metric\n");
    for (p, m) in table.perms.iter().zip(&table.metrics) {
        let perm: Vec<String> = p.iter().map(|c| c.to_string()).collect();
        let metric = m.map_or_else(|| "failed".to_string(), |m| m.to_string());
        text.push_str(&format!("{},{metric}\n", perm.join("-")));
    }
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    EffectiveConfig {
        command: "oracle".into(),
        reformulate: Some(cfg),
        ..Default::default()
    }
    .write(&g.out_dir)?;
    println!(
        "{}",
        serde_json::json!({
            "instance": lp.name,
            "orders": table.perms.len(),
            "distinct_metrics": table.distinct_metrics(),
            "best_perm": table.best_perm(),
            "best_metric": table.metrics[table.best],
            "identity_metric": table.metrics[0],
        })
    );
    Ok(())
}

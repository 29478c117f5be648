use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::datagen::random_lp;
use crate::nn::gradcheck::{gradient_check, sample_entries};
use crate::nn::Gradients;
use crate::reformulate::{split_variables, ClusterSplit};
use crate::simplex::BuiltinSimplex;

fn instances(count: usize) -> Vec<LpInstance> {
    (0..count)
        .map(|i| random_lp(&mut ChaCha8Rng::seed_from_u64(500 + i as u64), format!("t{i}"), 6, 12))
        .collect()
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        steps: 6,
        batch_size: 3,
        lr: 1e-2,
        k_clusters: 3,
        checkpoint_interval: 3,
        network: NetworkConfig {
            width: 8,
            gcnn_rounds: 1,
            pointer_hidden: 8,
            critic_hidden: 4,
            forget_bias: 1.0,
        },
        ..TrainConfig::profile(Profile::Desk)
    }
}

#[test]
fn reward_modes() {
    assert_eq!(RewardMode::Raw.reward(10.0, 7.0), 3.0);
    assert_eq!(RewardMode::Relative.reward(10.0, 7.0), 0.3);
    assert_eq!(RewardMode::Relative.reward(0.0, 2.0), -2.0);
}

#[test]
fn lr_decays_every_interval() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr_at(0), 1e-4);
    assert_eq!(cfg.lr_at(999), 1e-4);
    assert!((cfg.lr_at(1000) - 0.96e-4).abs() < 1e-18);
    assert!((cfg.lr_at(40_000) / 1e-4 - 0.96f64.powi(40)).abs() < 1e-12);
}

#[test]
fn profiles_and_validation() {
    let paper = TrainConfig::profile(Profile::Paper);
    assert_eq!((paper.steps, paper.batch_size, paper.k_clusters), (40_000, 8, 20));
    assert_eq!((paper.train_size, paper.val_size), (Some(640), Some(320)));
    assert_eq!(TrainConfig::profile(Profile::Desk).steps, 5_000);
    assert!(TrainConfig { steps: 0, ..tiny_config() }.validate().is_err());
    assert!(TrainConfig { lr_decay: 1.5, ..tiny_config() }.validate().is_err());
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let cfg = tiny_config();
    let mut policy = PolicyParams::new(cfg.network, 3);
    let data = instances(3);
    let prepared: Vec<_> = data.iter().map(|lp| PreparedInstance::new(lp, 3, SplitMethod::ContiguousBlocks).unwrap()).collect();
    policy.calibrate(&prepared.iter().map(|p| p.graph.clone()).collect::<Vec<_>>()).unwrap();
    let v = policy.params.find("pointer.attention.v").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for x in policy.params.get_mut(v).data_mut() {
        *x = rng.gen_range(-1.0..1.0);
    }
    let forced = [[2usize, 0, 1], [0, 2, 1], [1, 0, 2]];
    let advantages = [0.7, -1.3, 0.4];
    let surrogate = |ps: &crate::nn::ParamSet, grads: Option<&mut Gradients>| {
        let mut total = 0.0;
        let mut g = grads;
        for ((inst, perm), adv) in prepared.iter().zip(&forced).zip(&advantages) {
            let mut ctx = Ctx::new(ps);
            let trace = policy_forward(&mut ctx, &policy, inst, Pool::Mean, DecodeMode::Forced(perm)).unwrap();
            let lp = ctx.tape.value(trace.output.log_prob).item();
            total -= adv * lp / 3.0;
            if let Some(gr) = g.as_deref_mut() {
                ctx.tape.backward(trace.output.log_prob, -adv / 3.0, gr).unwrap();
            }
        }
        total
    };
    let mut grads = policy.zero_grads();
    surrogate(&policy.params, Some(&mut grads));
    let entries = sample_entries(&policy.params, &policy.policy_slots(), 2, &mut rng);
    let report = gradient_check(&policy.params, &grads, &entries, 1e-5, 1e-4, 1e-8, |ps| surrogate(ps, None));
    assert!(report.passed(), "{report:?}");
}

#[test]
fn zero_advantage_leaves_policy_unchanged() {
    let cfg = tiny_config();
    let mut state = TrainState::new(&cfg);
    let before = state.policy.params.clone();
    let grads = state.policy.zero_grads();
    state.policy_opt.step(&mut state.policy.params, &grads, 1e-2).unwrap();
    assert_eq!(before, state.policy.params);
}

#[test]
fn single_cluster_training_never_moves_policy() {
    let cfg = TrainConfig {
        k_clusters: 1,
        ..tiny_config()
    };
    let state = train(&BuiltinSimplex, &cfg, &instances(4), &TrainOutput::default(), None).unwrap();
    let mut fresh = TrainState::new(&cfg);
    fresh.policy.calibrate(&[]).unwrap();
    let calibrated_slots: Vec<usize> = (0..state.policy.params.len())
        .filter(|&s| !state.policy.params.is_trainable(s))
        .collect();
    for s in state.policy.policy_slots() {
        assert_eq!(state.policy.params.get(s), fresh.policy.params.get(s), "{}", state.policy.params.name(s));
    }
    assert!(!calibrated_slots.is_empty());
    assert!(state.log.iter().all(|r| r.mean_reward == 0.0));
}

#[test]
fn training_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let data = instances(5);
    let out = TrainOutput {
        dir: Some(dir.path().to_path_buf()),
    };
    let full = train(&BuiltinSimplex, &cfg, &data, &out, None).unwrap();
    let csv_full = fs::read(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(full.log.len(), 6);
    assert!(full.log.iter().all(|r| r.wall_time == 0.0));

    let again = train(&BuiltinSimplex, &cfg, &data, &TrainOutput::default(), None).unwrap();
    assert_eq!(again.log, full.log);
    assert_eq!(again.policy.params, full.policy.params);

    let mid = Checkpoint::read(&dir.path().join(checkpoint_name(3))).unwrap();
    let (state, saved_cfg) = TrainState::from_checkpoint(&mid).unwrap();
    assert_eq!(saved_cfg, cfg);
    assert_eq!(state.step, 3);
    let dir2 = tempfile::tempdir().unwrap();
    let resumed = train(
        &BuiltinSimplex,
        &cfg,
        &data,
        &TrainOutput {
            dir: Some(dir2.path().to_path_buf()),
        },
        Some(state),
    )
    .unwrap();
    assert_eq!(resumed.policy.params, full.policy.params);
    assert_eq!(resumed.policy_opt, full.policy_opt);
    assert_eq!(fs::read(dir2.path().join(METRICS_FILE)).unwrap(), csv_full);
    let header = String::from_utf8(csv_full).unwrap();
    assert!(header.starts_with("step,mean_reward,critic_loss,lr,wall_time\n"));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = tiny_config();
    let state = train(&BuiltinSimplex, &cfg, &instances(3), &TrainOutput::default(), None).unwrap();
    let ck = state.to_checkpoint(&cfg).unwrap();
    let bytes = ck.to_bytes();
    let (back, _) = TrainState::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(back.to_checkpoint(&cfg).unwrap().to_bytes(), bytes);
}

#[test]
fn critic_updates_do_not_touch_policy_storage() {
    let cfg = tiny_config();
    let mut state = TrainState::new(&cfg);
    let data = instances(1);
    let inst = PreparedInstance::new(&data[0], 3, SplitMethod::ContiguousBlocks).unwrap();
    let mut grads = state.policy.zero_grads();
    {
        let mut ctx = Ctx::new(&state.policy.params);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trace = policy_forward(&mut ctx, &state.policy, &inst, Pool::Mean, DecodeMode::Sample(&mut rng)).unwrap();
        let emb = ctx.tape.value(trace.embeddings).clone();
        let b = state.policy.critic.forward(&mut ctx, &emb);
        ctx.tape.backward(b, 1.0, &mut grads).unwrap();
    }
    let before = state.policy.params.clone();
    state.critic_opt.step(&mut state.policy.params, &grads, 1e-2).unwrap();
    state.policy_opt.step(&mut state.policy.params, &grads, 1e-2).unwrap();
    for s in state.policy.policy_slots() {
        assert_eq!(before.get(s), state.policy.params.get(s));
    }
    assert!(state.policy.critic_slots().iter().any(|&s| before.get(s) != state.policy.params.get(s)));
}

#[test]
fn identity_evaluation_has_unit_ratio() {
    let data = instances(4);
    let cfg = EvalConfig {
        k_clusters: 3,
        ..Default::default()
    };
    let report = evaluate(&BuiltinSimplex, &data, &IdentityProposer, &cfg).unwrap();
    assert_eq!(report.evaluated, 4);
    assert!(report.rows.iter().all(|r| r.ratio == Some(1.0)));
    assert_eq!(report.mean_iteration_reduction, 0.0);
    assert_eq!(cdf_table(&report), vec![(1.0, 1.0)]);
}

#[test]
fn uniform_evaluation_is_reproducible() {
    let data = instances(4);
    let cfg = EvalConfig {
        k_clusters: 3,
        ..Default::default()
    };
    let a = evaluate(&BuiltinSimplex, &data, &UniformProposer, &cfg).unwrap();
    let b = evaluate(&BuiltinSimplex, &data, &UniformProposer, &cfg).unwrap();
    assert_eq!(a, b);
    let cdf = cdf_table(&a);
    assert_eq!(cdf.last().unwrap().1, 1.0);
    assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
}

#[test]
fn oracle_tables() {
    let lp = &instances(1)[0];
    let env = BuiltinSimplex;
    let cfg = SolverConfig::default();
    let one = brute_force_oracle(&env, lp, &split_variables(lp, 1, SplitMethod::ContiguousBlocks).unwrap(), Metric::Iterations, &cfg).unwrap();
    assert_eq!(one.perms, vec![vec![0]]);
    let split = split_variables(lp, 3, SplitMethod::ContiguousBlocks).unwrap();
    let three = brute_force_oracle(&env, lp, &split, Metric::Iterations, &cfg).unwrap();
    assert_eq!(three.perms.len(), 6);
    assert_eq!(three.perms[0], vec![0, 1, 2]);
    assert_eq!(three.perms[5], vec![2, 1, 0]);
    let best = three.metrics[three.best].unwrap();
    assert!(best <= three.metrics[0].unwrap());
    assert!(three.metrics[..three.best].iter().all(|m| m.map_or(true, |m| m > best)));
    assert_eq!(three.rank_fraction(best), 0.0);
    let ten = ClusterSplit::from_assignment((0..12).map(|j| j % 10).collect(), 10).unwrap();
    assert!(matches!(
        brute_force_oracle(&env, lp, &ten, Metric::Iterations, &cfg),
        Err(Error::TooManyPermutations { k: 10 })
    ));
}

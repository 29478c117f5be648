use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{gradient_check, sample_entries};
use super::*;
use crate::datagen::random_lp;
use crate::graph::featurize;
use crate::lp::{apply_permutation, ColumnPermutation, PermutationSource};

fn small_config() -> NetworkConfig {
    NetworkConfig {
        width: 8,
        gcnn_rounds: 2,
        pointer_hidden: 6,
        critic_hidden: 5,
        forget_bias: 1.0,
    }
}

fn graph(seed: u64, m: usize, n: usize) -> (crate::lp::LpInstance, GraphInput) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lp = random_lp(&mut rng, "g", m, n);
    let g = GraphInput::new(&featurize(&lp));
    (lp, g)
}

fn randomize(policy: &mut PolicyParams, slot: usize, rng: &mut impl Rng) {
    for v in policy.params.get_mut(slot).data_mut() {
        *v = rng.gen_range(-0.5..0.5);
    }
}

fn embed_values(policy: &PolicyParams, g: &GraphInput) -> Tensor {
    let mut ctx = Ctx::new(&policy.params);
    let v = policy.gcnn.forward(&mut ctx, g).unwrap();
    ctx.tape.value(v).clone()
}

#[test]
fn gcnn_gradients_match_finite_differences() {
    let mut policy = PolicyParams::new(small_config(), 1);
    let (_, g) = graph(2, 5, 9);
    policy.calibrate(std::slice::from_ref(&g)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let weights = Tensor::from_vec(9, 8, (0..72).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let loss = |ps: &ParamSet, grads: Option<&mut Gradients>| {
        let mut ctx = Ctx::new(ps);
        let v = policy.gcnn.forward(&mut ctx, &g).unwrap();
        let w = ctx.tape.constant(weights.clone());
        let prod = ctx.tape.mul(v, w);
        let s = ctx.tape.sum(prod);
        if let Some(gr) = grads {
            ctx.tape.backward(s, 1.0, gr).unwrap();
        }
        ctx.tape.value(s).item()
    };
    let mut grads = policy.zero_grads();
    loss(&policy.params, Some(&mut grads));
    let slots: Vec<usize> = policy.policy_slots().into_iter().filter(|&s| {
        policy.params.name(s).starts_with("gcnn")
    }).collect();
    let entries = sample_entries(&policy.params, &slots, 4, &mut rng);
    let report = gradient_check(&policy.params, &grads, &entries, 1e-5, 1e-4, 1e-8, |ps| {
        loss(ps, None)
    });
    assert!(report.passed(), "{report:?}");
}

#[test]
fn pointer_and_pipeline_gradients_match_finite_differences() {
    let mut policy = PolicyParams::new(small_config(), 4);
    let (_, g) = graph(5, 4, 7);
    policy.calibrate(std::slice::from_ref(&g)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let v_slot = policy.params.find("pointer.attention.v").unwrap();
    randomize(&mut policy, v_slot, &mut rng);
    let segments: Rc<[Vec<usize>]> = vec![vec![0, 1, 2], vec![3, 4], vec![5, 6]].into();
    let forced = [2usize, 0, 1];
    let loss = |ps: &ParamSet, grads: Option<&mut Gradients>| {
        let mut ctx = Ctx::new(ps);
        let v = policy.gcnn.forward(&mut ctx, &g).unwrap();
        let pooled = ctx.tape.segment_pool(v, segments.clone(), Pool::Mean);
        let out = policy
            .pointer
            .forward::<ChaCha8Rng>(&mut ctx, pooled, DecodeMode::Forced(&forced))
            .unwrap();
        if let Some(gr) = grads {
            ctx.tape.backward(out.log_prob, 1.0, gr).unwrap();
        }
        ctx.tape.value(out.log_prob).item()
    };
    let mut grads = policy.zero_grads();
    loss(&policy.params, Some(&mut grads));
    let entries = sample_entries(&policy.params, &policy.policy_slots(), 3, &mut rng);
    let report = gradient_check(&policy.params, &grads, &entries, 1e-5, 1e-4, 1e-8, |ps| {
        loss(ps, None)
    });
    assert!(report.passed(), "{report:?}");
    assert!(grads.slots[policy.params.find("gcnn.embed_vars.linear.w").unwrap()].norm_sq() > 0.0);
}

#[test]
fn critic_gradients_match_finite_differences() {
    let policy = PolicyParams::new(small_config(), 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let emb = Tensor::from_vec(6, 8, (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let loss = |ps: &ParamSet, grads: Option<&mut Gradients>| {
        let mut ctx = Ctx::new(ps);
        let out = policy.critic.forward(&mut ctx, &emb);
        if let Some(gr) = grads {
            ctx.tape.backward(out, 1.0, gr).unwrap();
        }
        ctx.tape.value(out).item()
    };
    let mut grads = policy.zero_grads();
    loss(&policy.params, Some(&mut grads));
    let entries = sample_entries(&policy.params, &policy.critic_slots(), 40, &mut rng);
    let report = gradient_check(&policy.params, &grads, &entries, 1e-5, 1e-4, 1e-8, |ps| {
        loss(ps, None)
    });
    assert!(report.passed(), "{report:?}");
    for s in policy.policy_slots() {
        assert_eq!(grads.slots[s].norm_sq(), 0.0);
    }
}

#[test]
fn critic_pooling_is_order_and_duplicate_invariant() {
    let policy = PolicyParams::new(NetworkConfig::default(), 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let row: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let eval = |t: &Tensor| {
        let mut ctx = Ctx::new(&policy.params);
        let o = policy.critic.forward(&mut ctx, t);
        ctx.tape.value(o).item()
    };
    let single = Tensor::row_vector(row.clone());
    let triple = Tensor::from_vec(3, 64, [row.clone(), row.clone(), row].concat());
    assert_eq!(eval(&single), eval(&triple));
    let other: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = Tensor::from_vec(2, 64, [single.data().to_vec(), other.clone()].concat());
    let b = Tensor::from_vec(2, 64, [other, single.data().to_vec()].concat());
    assert!((eval(&a) - eval(&b)).abs() < 1e-12);
}

#[test]
fn gcnn_is_equivariant_under_column_relabeling() {
    let mut policy = PolicyParams::new(NetworkConfig::default(), 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let lp = random_lp(&mut rng, "eq", 6, 10);
    let g = GraphInput::new(&featurize(&lp));
    policy.calibrate(std::slice::from_ref(&g)).unwrap();
    for _ in 0..5 {
        let mut perm: Vec<usize> = (0..10).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let p = ColumnPermutation::new(perm.clone(), PermutationSource::Manual).unwrap();
        let h = GraphInput::new(&featurize(&apply_permutation(&lp, &p).unwrap()));
        let (a, b) = (embed_values(&policy, &g), embed_values(&policy, &h));
        for (new, &old) in perm.iter().enumerate() {
            for (x, y) in a.row(old).iter().zip(b.row(new)) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }
}

#[test]
fn edgeless_graph_embeds_each_variable_independently() {
    let policy = PolicyParams::new(small_config(), 13);
    let mut b = crate::lp::LpBuilder::new("noedges");
    b.add_col("x", 1.0, 0.0, 2.0);
    b.add_col("y", 1.0, 0.0, 2.0);
    b.add_col("z", -1.0, 0.0, 5.0);
    let g = GraphInput::new(&featurize(&b.build().unwrap()));
    let v = embed_values(&policy, &g);
    assert_eq!(v.row(0), v.row(1));
    assert_ne!(v.row(0), v.row(2));
}

#[test]
fn isomorphic_duplicates_share_embeddings() {
    let policy = PolicyParams::new(small_config(), 14);
    let mut b = crate::lp::LpBuilder::new("dup");
    let x = b.add_col("x", 1.0, 0.0, 1.0);
    let y = b.add_col("y", 1.0, 0.0, 1.0);
    let z = b.add_col("z", 2.0, 0.0, 3.0);
    b.add_row("r0", crate::lp::RowSense::Le, 4.0, &[(x, 1.0), (z, 2.0)]);
    b.add_row("r1", crate::lp::RowSense::Le, 4.0, &[(y, 1.0), (z, 2.0)]);
    let g = GraphInput::new(&featurize(&b.build().unwrap()));
    let v = embed_values(&policy, &g);
    for (a, b) in v.row(0).iter().zip(v.row(1)) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn pointer_sample(policy: &PolicyParams, k: usize, seed: u64) -> (Vec<usize>, f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx = Ctx::new(&policy.params);
    let data: Vec<f64> = (0..k * policy.config.width).map(|i| (i as f64 * 0.37).sin()).collect();
    let x = ctx.tape.constant(Tensor::from_vec(k, policy.config.width, data));
    let out = policy
        .pointer
        .forward(&mut ctx, x, DecodeMode::Sample(&mut rng))
        .unwrap();
    (out.perm, ctx.tape.value(out.log_prob).item(), out.step_log_probs)
}

#[test]
fn single_cluster_has_probability_one() {
    let policy = PolicyParams::new(small_config(), 15);
    let (perm, lp, _) = pointer_sample(&policy, 1, 0);
    assert_eq!(perm, vec![0]);
    assert_eq!(lp, 0.0);
}

#[test]
fn sampling_is_reproducible_and_valid() {
    let mut policy = PolicyParams::new(small_config(), 16);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let v_slot = policy.params.find("pointer.attention.v").unwrap();
    randomize(&mut policy, v_slot, &mut rng);
    for seed in 0..20 {
        let (p1, l1, steps) = pointer_sample(&policy, 5, seed);
        let (p2, l2, _) = pointer_sample(&policy, 5, seed);
        assert_eq!((p1.clone(), l1.to_bits()), (p2, l2.to_bits()));
        let mut sorted = p1.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        assert!((steps.iter().sum::<f64>() - l1).abs() <= 1e-10);
        assert_eq!(*steps.last().unwrap(), 0.0);
    }
}

#[test]
fn untrained_policy_is_uniform() {
    let policy = PolicyParams::new(small_config(), 18);
    let (_, lp, _) = pointer_sample(&policy, 4, 1);
    assert!((lp + (24f64).ln()).abs() < 1e-12);
}

#[test]
fn greedy_ignores_rng_and_masks_exactly() {
    let mut policy = PolicyParams::new(small_config(), 19);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let v_slot = policy.params.find("pointer.attention.v").unwrap();
    randomize(&mut policy, v_slot, &mut rng);
    let run = || {
        let mut ctx = Ctx::new(&policy.params);
        let x = ctx.tape.constant(Tensor::from_vec(3, 8, (0..24).map(|i| i as f64 / 24.0).collect()));
        policy
            .pointer
            .forward::<ChaCha8Rng>(&mut ctx, x, DecodeMode::Greedy)
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.perm, b.perm);
    for (step, probs) in a.step_probs.iter().enumerate() {
        for &chosen in &a.perm[..step] {
            assert_eq!(probs[chosen], 0.0);
        }
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn checkpoint_round_trip_restores_params() {
    let mut a = PolicyParams::new(small_config(), 21);
    let (_, g) = graph(22, 3, 5);
    a.calibrate(std::slice::from_ref(&g)).unwrap();
    let ck = Checkpoint {
        meta: String::new(),
        tensors: a.export_tensors(),
    };
    let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    let mut b = PolicyParams::new(small_config(), 99);
    b.import_tensors(&back).unwrap();
    assert_eq!(a.params, b.params);
    let mut wrong = PolicyParams::new(NetworkConfig::default(), 1);
    assert!(wrong.import_tensors(&back).is_err());
}

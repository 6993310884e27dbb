//! Trainer behaviour: determinism, resume, baseline properties, critic
//! regression and clipping.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use errl::policy::{Hyper, Matrix};
use errl::routing::{generate_instances, Instance, ProblemKind};
use errl::training::{
    batch_gradient, clip_global_norm, derive_seed, errl1_instance_gradient, errl2_step, global_norm, BaselineKind,
    EpochMetrics, TrainConfig, Trainer, TrainerKind,
};

fn tiny(kind: ProblemKind, n: usize) -> TrainConfig {
    TrainConfig {
        hyper: Hyper::tiny(),
        batch_size: 4,
        trajectories_per_instance: 4,
        epochs: 10,
        steps_per_epoch: 3,
        validation_size: 16,
        lr: 1e-3,
        ..TrainConfig::desk(kind, n)
    }
}

fn comparable(h: &[EpochMetrics]) -> Vec<EpochMetrics> {
    h.iter().cloned().map(|m| EpochMetrics { seconds: 0.0, ..m }).collect()
}

#[test]
fn resume_after_epoch_three_matches_uninterrupted_run() {
    for kind in [ProblemKind::Tsp, ProblemKind::Cvrp] {
        let cfg = tiny(kind, 6);
        let mut full = Trainer::new(cfg.clone()).unwrap();
        full.run(10, None, |_| {}).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let mut first = Trainer::new(cfg.clone()).unwrap();
        first.run(3, Some(dir.path()), |_| {}).unwrap();
        drop(first);
        let ck = errl::training::Checkpoint::load(dir.path().join("checkpoint.json")).unwrap();
        let mut resumed = Trainer::from_checkpoint(ck).unwrap();
        resumed.run(10, Some(dir.path()), |_| {}).unwrap();

        assert_eq!(comparable(&full.history), comparable(&resumed.history), "{kind}");
        assert_eq!(full.params.theta.tensors(), resumed.params.theta.tensors());
        assert_eq!(full.step, resumed.step);
    }
}

#[test]
fn errl2_resume_is_deterministic_too() {
    let cfg = TrainConfig {
        trainer: TrainerKind::Errl2,
        trajectories_per_instance: 1,
        ..tiny(ProblemKind::Tsp, 6)
    };
    let mut full = Trainer::new(cfg.clone()).unwrap();
    full.run(5, None, |_| {}).unwrap();
    let mut part = Trainer::new(cfg).unwrap();
    part.run(2, None, |_| {}).unwrap();
    let mut resumed = Trainer::from_checkpoint(part.checkpoint()).unwrap();
    resumed.run(5, None, |_| {}).unwrap();
    assert_eq!(comparable(&full.history), comparable(&resumed.history));
    assert_eq!(full.params.phi.tensors(), resumed.params.phi.tensors());
}

#[test]
fn smoke_run_learns_and_entropy_decays() {
    let cfg = TrainConfig {
        batch_size: 16,
        trajectories_per_instance: 8,
        epochs: 6,
        steps_per_epoch: 20,
        validation_size: 100,
        ..tiny(ProblemKind::Tsp, 10)
    };
    let mut t = Trainer::new(cfg).unwrap();
    t.run(6, None, |_| {}).unwrap();
    let h = &t.history;
    assert!(t.params.check_finite().is_ok());
    let (first, last) = (&h[0], h.last().unwrap());
    assert!(last.mean_val_length < first.mean_val_length, "{h:?}");
    assert!(first.mean_entropy > last.mean_entropy && last.mean_entropy > 0.0, "{h:?}");
    for m in h {
        assert!(m.grad_norm.is_finite() && m.baseline_mean < 0.0);
    }
}

/// Per-coordinate mean and standard error over samples.
fn mean_and_se(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = samples.len() as f64;
    let dim = samples[0].len();
    let mut mean = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for s in samples {
        for k in 0..dim {
            mean[k] += s[k] / m;
        }
    }
    for s in samples {
        for k in 0..dim {
            sq[k] += (s[k] - mean[k]).powi(2);
        }
    }
    let se = sq.iter().map(|v| (v / (m - 1.0) / m).sqrt()).collect();
    (mean, se)
}

fn flatten(g: &[Matrix]) -> Vec<f64> {
    g.iter().flat_map(|m| m.data().iter().copied()).collect()
}

fn estimator_samples(inst: &Instance, cfg: &TrainConfig, resamples: u64) -> Vec<Vec<f64>> {
    let params = errl::policy::PolicyParams::init(cfg.hyper, 5).unwrap();
    (0..resamples)
        .map(|r| {
            let g = errl1_instance_gradient(&params, inst, cfg, derive_seed(&[77, r]), 1.0).unwrap();
            flatten(&g.theta)
        })
        .collect()
}

#[test]
fn constant_reward_shift_leaves_expected_gradient_unchanged() {
    // The greedy-rollout baseline is a per-instance constant, so its estimator
    // is the b = 0 estimator with every reward shifted by that constant.
    let inst = generate_instances(ProblemKind::Tsp, 6, 1, 31).unwrap().remove(0);
    let base = TrainConfig {
        alpha: 0.0,
        ..tiny(ProblemKind::Tsp, 6)
    };
    let none = estimator_samples(&inst, &TrainConfig { baseline: BaselineKind::None, ..base.clone() }, 4000);
    let shifted = estimator_samples(&inst, &TrainConfig { baseline: BaselineKind::GreedyRollout, ..base }, 4000);
    let diff: Vec<Vec<f64>> = none
        .iter()
        .zip(&shifted)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let (mean, se) = mean_and_se(&diff);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for k in 0..mean.len() {
        if se[k] > 1e-12 {
            worst = worst.max((mean[k] / se[k]).abs());
            checked += 1;
        }
    }
    assert!(checked > 100, "{checked}");
    // max of |z| over a few thousand coordinates, most of them correlated
    assert!(worst < 5.0, "max |z| {worst} over {checked} coordinates");
}

#[test]
fn shared_baseline_reduces_gradient_variance() {
    let inst = generate_instances(ProblemKind::Tsp, 6, 1, 32).unwrap().remove(0);
    let base = TrainConfig {
        alpha: 0.0,
        ..tiny(ProblemKind::Tsp, 6)
    };
    let shared = estimator_samples(&inst, &TrainConfig { baseline: BaselineKind::SharedMean, ..base.clone() }, 10_000);
    let none = estimator_samples(&inst, &TrainConfig { baseline: BaselineKind::None, ..base }, 10_000);
    let (_, se_shared) = mean_and_se(&shared);
    let (_, se_none) = mean_and_se(&none);
    let mut compared = 0;
    for k in 0..se_shared.len() {
        if se_none[k] > 1e-12 {
            assert!(se_shared[k] <= se_none[k], "coordinate {k}: {} > {}", se_shared[k], se_none[k]);
            compared += 1;
        }
    }
    assert!(compared > 100);
}

fn triangle() -> Instance {
    Instance::tsp(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap()
}

#[test]
fn critic_regresses_to_constant_reward() {
    // every tour of a triangle has the same length
    let c = -(2.0 + 2f64.sqrt());
    let cfg = TrainConfig {
        trainer: TrainerKind::Errl2,
        trajectories_per_instance: 1,
        batch_size: 8,
        lr: 1e-2,
        ..tiny(ProblemKind::Tsp, 6)
    };
    let mut t = Trainer::new(cfg.clone()).unwrap();
    let batch = vec![triangle(); 8];
    for step in 0..600 {
        let seeds: Vec<u64> = (0..8).map(|i| derive_seed(&[1, step, i])).collect();
        errl2_step(&mut t.params, &mut t.opt, &batch, &seeds, &cfg, step).unwrap();
    }
    let v = errl::policy::critic_value(&triangle(), &t.params).unwrap();
    assert!(((v - c) / c).abs() < 0.01, "critic {v} vs reward {c}");
}

#[test]
fn critic_loss_falls_on_frozen_policy() {
    let cfg = TrainConfig {
        trainer: TrainerKind::Errl2,
        trajectories_per_instance: 1,
        lr: 1e-3,
        ..tiny(ProblemKind::Tsp, 10)
    };
    let mut t = Trainer::new(cfg.clone()).unwrap();
    let theta_before = t.params.theta.tensors().to_vec();
    let batch = generate_instances(ProblemKind::Tsp, 10, 16, 99).unwrap();
    let mut losses = Vec::new();
    for step in 0..500u64 {
        let seeds: Vec<u64> = (0..batch.len() as u64).map(|i| derive_seed(&[2, step, i])).collect();
        let g = batch_gradient(&t.params, &batch, &cfg, &seeds).unwrap();
        let mut phi = g.phi.unwrap();
        clip_global_norm(&mut phi, cfg.grad_clip_norm);
        t.opt.phi.step(&mut t.params.phi, &phi, cfg.lr, 0.0);
        losses.push(g.critic_loss.unwrap());
    }
    assert_eq!(t.params.theta.tensors(), &theta_before[..]);
    let head: f64 = losses[..50].iter().sum::<f64>() / 50.0;
    let tail: f64 = losses[450..].iter().sum::<f64>() / 50.0;
    assert!(tail < 0.1 * head, "critic loss {head} -> {tail}");
}

#[test]
fn clipped_norm_never_exceeds_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..200 {
        let scale = 10f64.powf(rng.gen_range(-3.0..4.0));
        let mut grads: Vec<Matrix> = (0..4)
            .map(|k| {
                let data = (0..(k + 1) * 7).map(|_| rng.gen_range(-scale..scale)).collect();
                Matrix::from_vec(k + 1, 7, data)
            })
            .collect();
        let before = global_norm(&grads);
        let reported = clip_global_norm(&mut grads, 2.0);
        let after = global_norm(&grads);
        assert_eq!(reported, before);
        assert!(after <= 2.0 + 1e-9, "trial {trial}: {after}");
        if before <= 2.0 {
            assert_eq!(after, before);
        }
    }
}

#[test]
fn trained_params_stay_finite_with_aggressive_lr() {
    let cfg = TrainConfig {
        lr: 0.5,
        epochs: 2,
        ..tiny(ProblemKind::Cvrp, 8)
    };
    let mut t = Trainer::new(cfg).unwrap();
    t.run(2, None, |_| {}).unwrap();
    assert!(t.params.check_finite().is_ok());
}

/// Desk-profile TSP20 curves over three seeds. After epoch 20 the means of
/// consecutive 20-epoch windows decrease, with one violation allowed, and
/// per-step entropy falls but stays positive. Window means are compared
/// rather than single epochs: each epoch validates on fresh instances, and
/// that noise (about 0.01) is as large as late 20-epoch progress. Reuses
/// the acceptance suite's cached runs and trains the missing ones, which
/// takes hours.
#[test]
#[ignore]
fn desk_curves_decrease_and_entropy_decays() {
    for seed in 1..=3 {
        let h = common::desk_history(0.3, seed);
        let val: Vec<f64> = h.iter().map(|m| m.mean_val_length).collect();
        let windows: Vec<f64> = val[20..].chunks_exact(20).map(|w| w.iter().sum::<f64>() / 20.0).collect();
        let violations = windows.windows(2).filter(|p| p[1] > p[0]).count();
        assert!(violations <= 1, "seed {seed}: window means {windows:?}");
        let (first, last) = (h[0].mean_entropy, h.last().unwrap().mean_entropy);
        assert!(first > last && last > 0.0, "seed {seed}: entropy {first} -> {last}");
    }
}

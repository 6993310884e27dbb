//! Surrogate objectives and their gradients.
//!
//! Gradients of the policy objective `J` are returned in the ascent
//! direction; the critic gradient is that of its squared-error loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::{
    critic_on, decode_on, encode_on, rollout, sample_action, DecodeMode, DecodeState, Matrix, PolicyParams, StepRecord,
    Tape, Var,
};
use crate::routing::Instance;

use super::config::{BaselineKind, TrainConfig, TrainerKind};

/// Deterministic 64-bit seed derived from a sequence of words (splitmix64 chain).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

/// Gradient and statistics of one instance's contribution.
#[derive(Debug, Clone)]
pub struct InstanceGradient {
    pub theta: Vec<Matrix>,
    pub phi: Option<Vec<Matrix>>,
    /// Tour length of every sampled trajectory.
    pub lengths: Vec<f64>,
    /// Mean per-step entropy of every sampled trajectory.
    pub entropies: Vec<f64>,
    pub baseline: f64,
    pub critic_loss: Option<f64>,
}

/// Batch-averaged gradient and statistics.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub theta: Vec<Matrix>,
    pub phi: Option<Vec<Matrix>>,
    pub mean_length: f64,
    pub mean_entropy: f64,
    pub baseline_mean: f64,
    pub critic_loss: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn seed_rows(records: &[StepRecord], per_traj: impl Fn(usize) -> [f64; 2]) -> Vec<(Var, Matrix)> {
    records
        .iter()
        .map(|r| {
            let data = r.rows.iter().flat_map(|&j| per_traj(j)).collect();
            (r.out, Matrix::from_vec(r.rows.len(), 2, data))
        })
        .collect()
}

fn mean_step_entropy(s: &DecodeState) -> f64 {
    if s.step == 0 {
        0.0
    } else {
        s.entropy_sum / s.step as f64
    }
}

/// ERRL1 gradient for one instance, scaled by `scale`.
///
/// With `N` trajectories, rewards `R_j = -length_j`, mean step entropies
/// `H_j` and baseline `b`, this is
/// `scale * sum_j [(R_j - b) grad log p_j + alpha grad H_j]`.
/// With `entropy_in_reward` the entropy moves into the reward instead:
/// `R_j + alpha H_j` replaces `R_j` and the direct entropy term is dropped.
pub fn errl1_instance_gradient(
    params: &PolicyParams,
    inst: &Instance,
    cfg: &TrainConfig,
    sample_seed: u64,
    scale: f64,
) -> Result<InstanceGradient> {
    let n_traj = cfg.trajectories_per_instance;
    let mut tape = Tape::new();
    let enc = encode_on(&mut tape, inst, params);
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let (states, records) = decode_on(&mut tape, params, &enc, inst, n_traj, |_, _, d| {
        Ok(sample_action(d, &mut rng))
    })?;

    let mut lengths = Vec::with_capacity(n_traj);
    let mut entropies = Vec::with_capacity(n_traj);
    let mut steps = Vec::with_capacity(n_traj);
    for s in &states {
        lengths.push(crate::routing::tour_length(inst, &s.actions)?);
        entropies.push(mean_step_entropy(s));
        steps.push(s.step.max(1) as f64);
    }
    let rewards: Vec<f64> = lengths
        .iter()
        .zip(&entropies)
        .map(|(l, h)| if cfg.entropy_in_reward { -l + cfg.alpha * h } else { -l })
        .collect();
    let baseline = match cfg.baseline {
        BaselineKind::SharedMean => mean(&rewards),
        BaselineKind::None => 0.0,
        BaselineKind::GreedyRollout => {
            let g = rollout(inst, params, DecodeMode::Greedy)?;
            if cfg.entropy_in_reward {
                g.reward + cfg.alpha * g.mean_entropy()
            } else {
                g.reward
            }
        }
    };
    let direct = if cfg.entropy_in_reward { 0.0 } else { cfg.alpha };
    let seeds = seed_rows(&records, |j| [scale * (rewards[j] - baseline), scale * direct / steps[j]]);
    let mut theta = params.theta.zeros_like();
    tape.backward(&seeds, &mut theta);
    Ok(InstanceGradient {
        theta,
        phi: None,
        lengths,
        entropies,
        baseline,
        critic_loss: None,
    })
}

/// ERRL2 gradient for one instance: one sampled trajectory, critic baseline.
///
/// Policy part: `scale * [(R - V) grad log p + alpha grad H]`. Critic part:
/// `scale * grad (R - V)^2` with the graph embedding held fixed.
pub fn errl2_instance_gradient(
    params: &PolicyParams,
    inst: &Instance,
    cfg: &TrainConfig,
    sample_seed: u64,
    scale: f64,
) -> Result<InstanceGradient> {
    let mut tape = Tape::new();
    let enc = encode_on(&mut tape, inst, params);
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let (states, records) = decode_on(&mut tape, params, &enc, inst, 1, |_, _, d| Ok(sample_action(d, &mut rng)))?;
    let s = &states[0];
    let length = crate::routing::tour_length(inst, &s.actions)?;
    let h = mean_step_entropy(s);
    let reward = if cfg.entropy_in_reward { -length + cfg.alpha * h } else { -length };

    let graph = tape.value(enc.graph).clone();
    let mut critic_tape = Tape::new();
    let v = critic_on(&mut critic_tape, params, &graph);
    let value = critic_tape.value(v).get(0, 0);
    let err = reward - value;
    let mut phi = params.phi.zeros_like();
    critic_tape.backward(&[(v, Matrix::filled(1, 1, -2.0 * err * scale))], &mut phi);

    let direct = if cfg.entropy_in_reward { 0.0 } else { cfg.alpha };
    let steps = s.step.max(1) as f64;
    let seeds = seed_rows(&records, |_| [scale * err, scale * direct / steps]);
    let mut theta = params.theta.zeros_like();
    tape.backward(&seeds, &mut theta);
    Ok(InstanceGradient {
        theta,
        phi: Some(phi),
        lengths: vec![length],
        entropies: vec![h],
        baseline: value,
        critic_loss: Some(err * err),
    })
}

fn sum_into(acc: &mut [Matrix], add: &[Matrix]) {
    for (a, b) in acc.iter_mut().zip(add) {
        a.add_assign(b);
    }
}

/// Batch gradient for the configured trainer. Instances run in parallel and
/// are reduced in index order, so the result does not depend on threading.
pub fn batch_gradient(
    params: &PolicyParams,
    batch: &[Instance],
    cfg: &TrainConfig,
    sample_seeds: &[u64],
) -> Result<BatchGradient> {
    if batch.is_empty() || batch.len() != sample_seeds.len() {
        return Err(Error::LengthMismatch {
            left: batch.len(),
            right: sample_seeds.len(),
        });
    }
    let b = batch.len() as f64;
    let parts: Vec<InstanceGradient> = batch
        .par_iter()
        .zip(sample_seeds.par_iter())
        .map(|(inst, &seed)| match cfg.trainer {
            TrainerKind::Errl1 => {
                let scale = 1.0 / (b * cfg.trajectories_per_instance as f64);
                errl1_instance_gradient(params, inst, cfg, seed, scale)
            }
            TrainerKind::Errl2 => errl2_instance_gradient(params, inst, cfg, seed, 1.0 / b),
        })
        .collect::<Result<_>>()?;

    let mut theta = params.theta.zeros_like();
    let mut phi = (cfg.trainer == TrainerKind::Errl2).then(|| params.phi.zeros_like());
    let (mut len_sum, mut ent_sum, mut count) = (0.0, 0.0, 0usize);
    let (mut base_sum, mut critic_sum) = (0.0, 0.0);
    for p in &parts {
        sum_into(&mut theta, &p.theta);
        if let (Some(acc), Some(g)) = (phi.as_mut(), p.phi.as_ref()) {
            sum_into(acc, g);
        }
        len_sum += p.lengths.iter().sum::<f64>();
        ent_sum += p.entropies.iter().sum::<f64>();
        count += p.lengths.len();
        base_sum += p.baseline;
        critic_sum += p.critic_loss.unwrap_or(0.0);
    }
    Ok(BatchGradient {
        theta,
        phi,
        mean_length: len_sum / count as f64,
        mean_entropy: ent_sum / count as f64,
        baseline_mean: base_sum / b,
        critic_loss: (cfg.trainer == TrainerKind::Errl2).then(|| critic_sum / b),
    })
}

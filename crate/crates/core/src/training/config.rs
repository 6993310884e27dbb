use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Hyper;
use crate::routing::ProblemKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    /// Multi-trajectory policy gradient with a sampled baseline.
    Errl1,
    /// Single-trajectory actor-critic.
    Errl2,
}

/// Baseline subtracted from ERRL1 rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Mean reward of the N trajectories of the same instance.
    SharedMean,
    /// Reward of the greedy decode of the current policy.
    GreedyRollout,
    /// No baseline.
    None,
}

/// Step-wise learning rate decay: `lr * factor^(step / every)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    pub factor: f64,
    pub every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ProblemKind,
    /// Customers (or cities for TSP) per training instance.
    pub n: usize,
    pub hyper: Hyper,
    pub trainer: TrainerKind,
    pub baseline: BaselineKind,
    /// Entropy coefficient, in nats.
    pub alpha: f64,
    /// Add `alpha * mean step entropy` to the reward instead of the objective.
    pub entropy_in_reward: bool,
    pub lr: f64,
    pub lr_decay: Option<LrDecay>,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub trajectories_per_instance: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub grad_clip_norm: f64,
    pub validation_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk(ProblemKind::Tsp, 20)
    }
}

impl TrainConfig {
    /// Laptop-sized ERRL1 run: 64-wide network, B=64, N=8, 200 x 100 steps.
    pub fn desk(kind: ProblemKind, n: usize) -> Self {
        TrainConfig {
            kind,
            n,
            hyper: Hyper::desk(),
            trainer: TrainerKind::Errl1,
            baseline: BaselineKind::SharedMean,
            alpha: 0.3,
            entropy_in_reward: false,
            lr: 1e-4,
            lr_decay: None,
            weight_decay: 0.0,
            batch_size: 64,
            trajectories_per_instance: 8,
            epochs: 200,
            steps_per_epoch: 100,
            grad_clip_norm: 2.0,
            validation_size: 1000,
            seed: 1,
        }
    }

    /// Actor-critic variant with the step decay schedule.
    pub fn errl2(kind: ProblemKind, n: usize) -> Self {
        TrainConfig {
            trainer: TrainerKind::Errl2,
            trajectories_per_instance: 1,
            lr_decay: Some(LrDecay {
                factor: 0.96,
                every: 5000,
            }),
            ..TrainConfig::desk(kind, n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and >= 0");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm must be positive");
        }
        if self.batch_size == 0 || self.steps_per_epoch == 0 || self.validation_size == 0 {
            return bad("batch_size, steps_per_epoch and validation_size must be positive");
        }
        if self.trajectories_per_instance == 0 {
            return bad("trajectories_per_instance must be positive");
        }
        if self.trainer == TrainerKind::Errl1
            && self.baseline == BaselineKind::SharedMean
            && self.trajectories_per_instance < 2
        {
            return bad("the shared-mean baseline needs at least 2 trajectories per instance");
        }
        if let Some(d) = self.lr_decay {
            if !(d.factor > 0.0 && d.factor <= 1.0) || d.every == 0 {
                return bad("lr_decay needs factor in (0, 1] and every > 0");
            }
        }
        crate::routing::generate_instance(self.kind, self.n, 0)?;
        Ok(())
    }

    /// Learning rate at optimizer step `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        match self.lr_decay {
            Some(d) => self.lr * d.factor.powi((step / d.every) as i32),
            None => self.lr,
        }
    }
}

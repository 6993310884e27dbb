use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{rollout, DecodeMode, Matrix, ParamSet, PolicyParams};
use crate::routing::{generate_instance, generate_instances, io::write_instances, Instance};

use super::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use super::config::{TrainConfig, TrainerKind};
use super::objective::{batch_gradient, derive_seed};
use super::optim::{clip_global_norm, Adam};

const TRAIN_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;
const VALIDATION_STREAM: u64 = 3;

pub const METRICS_HEADER: &str = "epoch,mean_val_length,mean_entropy,baseline_mean,grad_norm,seconds";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub lr: f64,
    pub mean_length: f64,
    /// Mean per-step entropy of the sampled trajectories (nats).
    pub mean_entropy: f64,
    pub baseline_mean: f64,
    /// Policy gradient norm before clipping.
    pub grad_norm: f64,
    pub critic_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Greedy mean tour length on the epoch's validation set.
    pub mean_val_length: f64,
    pub mean_entropy: f64,
    pub baseline_mean: f64,
    pub grad_norm: f64,
    pub seconds: f64,
    pub mean_train_length: f64,
    pub critic_loss: Option<f64>,
}

/// Adam state for the policy and the critic.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub theta: Adam,
    pub phi: Adam,
}

impl Optimizer {
    pub fn new(params: &PolicyParams) -> Self {
        Optimizer {
            theta: Adam::new(&params.theta),
            phi: Adam::new(&params.phi),
        }
    }
}

fn check_grads(set: &ParamSet, grads: &[Matrix], step: u64, seeds: &[u64]) -> Result<()> {
    for (i, g) in grads.iter().enumerate() {
        if !g.all_finite() {
            return Err(Error::NonFinite(format!(
                "gradient of {} at step {step}; batch instance seeds {seeds:?}",
                set.name(i)
            )));
        }
    }
    Ok(())
}

/// Computes the batch gradient for `cfg.trainer` and applies one clipped Adam
/// update to `params`.
pub fn optimizer_step(
    params: &mut PolicyParams,
    opt: &mut Optimizer,
    batch: &[Instance],
    sample_seeds: &[u64],
    cfg: &TrainConfig,
    step: u64,
) -> Result<StepMetrics> {
    let grad = batch_gradient(params, batch, cfg, sample_seeds)?;
    let seeds: Vec<u64> = batch.iter().map(Instance::seed).collect();
    check_grads(&params.theta, &grad.theta, step, &seeds)?;
    let lr = cfg.lr_at(step);

    // ascent on J is descent on -J
    let mut theta_grad = grad.theta;
    theta_grad.iter_mut().for_each(|g| g.scale(-1.0));
    let grad_norm = clip_global_norm(&mut theta_grad, cfg.grad_clip_norm);
    opt.theta.step(&mut params.theta, &theta_grad, lr, cfg.weight_decay);

    if let Some(mut phi_grad) = grad.phi {
        check_grads(&params.phi, &phi_grad, step, &seeds)?;
        clip_global_norm(&mut phi_grad, cfg.grad_clip_norm);
        opt.phi.step(&mut params.phi, &phi_grad, lr, cfg.weight_decay);
    }
    params.check_finite()?;
    Ok(StepMetrics {
        step,
        lr,
        mean_length: grad.mean_length,
        mean_entropy: grad.mean_entropy,
        baseline_mean: grad.baseline_mean,
        grad_norm,
        critic_loss: grad.critic_loss,
    })
}

/// One ERRL1 update: N sampled trajectories per instance, sampled baseline,
/// entropy bonus.
pub fn errl1_step(
    params: &mut PolicyParams,
    opt: &mut Optimizer,
    batch: &[Instance],
    sample_seeds: &[u64],
    cfg: &TrainConfig,
    step: u64,
) -> Result<StepMetrics> {
    if cfg.trainer != TrainerKind::Errl1 {
        return Err(Error::Config("errl1_step needs trainer = errl1".into()));
    }
    optimizer_step(params, opt, batch, sample_seeds, cfg, step)
}

/// One ERRL2 update: one trajectory per instance, critic baseline, critic
/// regression.
pub fn errl2_step(
    params: &mut PolicyParams,
    opt: &mut Optimizer,
    batch: &[Instance],
    sample_seeds: &[u64],
    cfg: &TrainConfig,
    step: u64,
) -> Result<StepMetrics> {
    if cfg.trainer != TrainerKind::Errl2 {
        return Err(Error::Config("errl2_step needs trainer = errl2".into()));
    }
    optimizer_step(params, opt, batch, sample_seeds, cfg, step)
}

/// Greedy mean tour length over `instances`.
pub fn greedy_mean_length(params: &PolicyParams, instances: &[Instance]) -> Result<f64> {
    let lengths: Vec<f64> = instances
        .par_iter()
        .map(|inst| rollout(inst, params, DecodeMode::Greedy).map(|t| t.solution.total_length()))
        .collect::<Result<_>>()?;
    Ok(lengths.iter().sum::<f64>() / lengths.len() as f64)
}

/// Resumable training loop state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub params: PolicyParams,
    pub opt: Optimizer,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = PolicyParams::init(cfg.hyper, derive_seed(&[cfg.seed, 0]))?;
        let opt = Optimizer::new(&params);
        Ok(Trainer {
            cfg,
            params,
            opt,
            step: 0,
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.config.validate()?;
        let params = ck.params()?;
        Ok(Trainer {
            cfg: ck.config,
            params,
            opt: Optimizer {
                theta: ck.adam_theta,
                phi: ck.adam_phi,
            },
            step: ck.step,
            epoch: ck.epoch,
            history: ck.history,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.cfg.clone(),
            theta: self.params.theta.clone(),
            phi: self.params.phi.clone(),
            adam_theta: self.opt.theta.clone(),
            adam_phi: self.opt.phi.clone(),
            step: self.step,
            epoch: self.epoch,
            history: self.history.clone(),
        }
    }

    /// Training batch and sampling seeds for optimizer step `step`.
    pub fn batch_for(&self, step: u64) -> Result<(Vec<Instance>, Vec<u64>)> {
        let cfg = &self.cfg;
        let mut batch = Vec::with_capacity(cfg.batch_size);
        let mut seeds = Vec::with_capacity(cfg.batch_size);
        for i in 0..cfg.batch_size as u64 {
            batch.push(generate_instance(cfg.kind, cfg.n, derive_seed(&[cfg.seed, TRAIN_STREAM, step, i]))?);
            seeds.push(derive_seed(&[cfg.seed, SAMPLE_STREAM, step, i]));
        }
        Ok((batch, seeds))
    }

    /// Fresh validation instances for 1-based `epoch`.
    pub fn validation_set(&self, epoch: usize) -> Result<Vec<Instance>> {
        let base = derive_seed(&[self.cfg.seed, VALIDATION_STREAM, epoch as u64]);
        generate_instances(self.cfg.kind, self.cfg.n, self.cfg.validation_size, base)
    }

    pub fn train_step(&mut self) -> Result<StepMetrics> {
        let (batch, seeds) = self.batch_for(self.step)?;
        let m = optimizer_step(&mut self.params, &mut self.opt, &batch, &seeds, &self.cfg, self.step)?;
        self.step += 1;
        Ok(m)
    }

    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let start = Instant::now();
        let (mut ent, mut base, mut norm, mut len, mut critic) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let steps = self.cfg.steps_per_epoch;
        for _ in 0..steps {
            let m = self.train_step()?;
            ent += m.mean_entropy;
            base += m.baseline_mean;
            norm += m.grad_norm;
            len += m.mean_length;
            critic += m.critic_loss.unwrap_or(0.0);
        }
        let epoch = self.epoch + 1;
        let val = self.validation_set(epoch)?;
        let mean_val_length = greedy_mean_length(&self.params, &val)?;
        let k = steps as f64;
        let metrics = EpochMetrics {
            epoch,
            mean_val_length,
            mean_entropy: ent / k,
            baseline_mean: base / k,
            grad_norm: norm / k,
            seconds: start.elapsed().as_secs_f64(),
            mean_train_length: len / k,
            critic_loss: (self.cfg.trainer == TrainerKind::Errl2).then_some(critic / k),
        };
        self.epoch = epoch;
        self.history.push(metrics);
        Ok(metrics)
    }

    /// Runs until `epochs` epochs are complete. With `out_dir`, the
    /// checkpoint and metrics CSV are rewritten after every epoch and a
    /// failing batch is dumped next to them.
    pub fn run<F: FnMut(&EpochMetrics)>(&mut self, epochs: usize, out_dir: Option<&Path>, mut on_epoch: F) -> Result<()> {
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        while self.epoch < epochs {
            let m = match self.run_epoch() {
                Ok(m) => m,
                Err(e) => {
                    if let (true, Some(dir)) = (e.is_numerical(), out_dir) {
                        let (batch, _) = self.batch_for(self.step)?;
                        write_instances(dir.join(format!("failed_batch_step{}.jsonl", self.step)), &batch)?;
                    }
                    return Err(e);
                }
            };
            if let Some(dir) = out_dir {
                self.checkpoint().save(dir.join("checkpoint.json"))?;
                write_metrics_csv(dir.join("metrics.csv"), &self.history)?;
            }
            on_epoch(&m);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub checkpoint_path: Option<PathBuf>,
    pub params: PolicyParams,
}

/// Trains from scratch for `cfg.epochs` epochs.
pub fn train(cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainReport> {
    let mut t = Trainer::new(cfg.clone())?;
    t.run(cfg.epochs, out_dir, |_| {})?;
    Ok(TrainReport {
        config: cfg.clone(),
        seed: cfg.seed,
        epochs: t.history,
        checkpoint_path: out_dir.map(|d| d.join("checkpoint.json")),
        params: t.params,
    })
}

pub fn format_metrics_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for m in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            m.epoch, m.mean_val_length, m.mean_entropy, m.baseline_mean, m.grad_norm, m.seconds
        );
    }
    s
}

pub fn write_metrics_csv(path: impl AsRef<Path>, history: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_metrics_csv(history)).map_err(|e| Error::io(path, e))
}

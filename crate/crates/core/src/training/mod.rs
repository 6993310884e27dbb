//! Entropy-regularized policy-gradient training.

mod checkpoint;
mod config;
mod objective;
mod optim;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{BaselineKind, LrDecay, TrainConfig, TrainerKind};
pub use objective::{
    batch_gradient, derive_seed, errl1_instance_gradient, errl2_instance_gradient, BatchGradient, InstanceGradient,
};
pub use optim::{clip_global_norm, global_norm, Adam};
pub use trainer::{
    errl1_step, errl2_step, format_metrics_csv, greedy_mean_length, optimizer_step, train, write_metrics_csv,
    EpochMetrics, Optimizer, StepMetrics, TrainReport, Trainer, METRICS_HEADER,
};

//! Desk-profile TSP20 runs shared by the acceptance suite and the training
//! curve tests.

use std::path::PathBuf;

use errl::routing::ProblemKind;
use errl::training::{Checkpoint, EpochMetrics, TrainConfig, Trainer};

pub fn runs_dir() -> PathBuf {
    std::env::var_os("ERRL_ACCEPTANCE_RUNS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-runs"))
}

/// Full desk-profile TSP20 run (200 epochs x 100 batches), resumed from its
/// checkpoint when one exists.
pub fn desk_history(alpha: f64, seed: u64) -> Vec<EpochMetrics> {
    let cfg = TrainConfig {
        alpha,
        seed,
        ..TrainConfig::desk(ProblemKind::Tsp, 20)
    };
    let dir = runs_dir().join(format!("tsp20-alpha{alpha}-seed{seed}"));
    let mut trainer = match Checkpoint::load(dir.join("checkpoint.json")) {
        Ok(ck) if ck.config == cfg => Trainer::from_checkpoint(ck).unwrap(),
        _ => Trainer::new(cfg.clone()).unwrap(),
    };
    if trainer.epoch < cfg.epochs {
        eprintln!("training alpha={alpha} seed={seed} from epoch {}", trainer.epoch);
    }
    trainer
        .run(cfg.epochs, Some(&dir), |m| {
            eprintln!(
                "  alpha={alpha} seed={seed} epoch {:>3}: val {:.4} entropy {:.4} grad {:.3} ({:.0}s)",
                m.epoch, m.mean_val_length, m.mean_entropy, m.grad_norm, m.seconds
            )
        })
        .unwrap();
    trainer.history
}

use errl::training::{Checkpoint, EpochMetrics, Trainer};

use super::{ensure_dir, write_text};
use crate::cli::TrainArgs;
use crate::error::CliError;
use crate::settings::Settings;
use crate::spec::ExperimentSpec;

pub(crate) fn print_epoch(m: &EpochMetrics) {
    let critic = m.critic_loss.map(|c| format!(" critic {c:.4}")).unwrap_or_default();
    println!(
        "epoch {:>4}  val {:.4}  train {:.4}  entropy {:.4}  grad {:.3}{critic}  {:.1}s",
        m.epoch, m.mean_val_length, m.mean_train_length, m.mean_entropy, m.grad_norm, m.seconds
    );
}

pub fn run(settings: &Settings, args: TrainArgs) -> Result<(), CliError> {
    let resume = settings.get(args.resume.clone(), "resume")?;
    let (mut trainer, out) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(&path)?;
            let out = settings
                .get(args.opts.out.clone(), "out")?
                .or_else(|| path.parent().map(|p| p.to_path_buf()))
                .unwrap_or_else(|| ".".into());
            let mut t = Trainer::from_checkpoint(ck)?;
            if let Some(e) = settings.get(args.opts.epochs, "epochs")? {
                t.cfg.epochs = e;
            }
            (t, out)
        }
        None => {
            let spec = ExperimentSpec::for_training(settings, &args.opts, "runs/train")?;
            println!("{}: {} n={} seed={}", spec.name, spec.kind, spec.n, spec.seed);
            (Trainer::new(spec.train)?, spec.out)
        }
    };
    ensure_dir(&out)?;
    let echo = serde_json::to_string_pretty(&trainer.cfg).map_err(errl::Error::from)?;
    write_text(&out.join("config.json"), &echo)?;
    let epochs = trainer.cfg.epochs;
    trainer.run(epochs, Some(&out), print_epoch)?;
    println!("checkpoint: {}", out.join("checkpoint.json").display());
    println!("metrics: {}", out.join("metrics.csv").display());
    Ok(())
}

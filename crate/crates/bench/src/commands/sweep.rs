use errl::training::{TrainConfig, Trainer};

use super::{csv_writer, ensure_dir, write_text};
use crate::cli::SweepArgs;
use crate::error::CliError;
use crate::settings::{parse_list, Settings};
use crate::spec::ExperimentSpec;
use crate::table;

const DEFAULT_ALPHAS: &str = "0.5,0.6,0.7,0.8,0.9";
const DEFAULT_LRS: &str = "1e-5,1e-4";

#[derive(Debug, Clone)]
struct SweepRow {
    alpha: f64,
    lr: f64,
    tour_length: f64,
    best_length: f64,
    epochs: usize,
}

pub fn run(settings: &Settings, args: SweepArgs) -> Result<(), CliError> {
    let spec = ExperimentSpec::for_training(settings, &args.opts, "runs/sweep")?;
    let alphas: Vec<f64> = parse_list(&settings.get_or(args.alphas, "alphas", DEFAULT_ALPHAS.to_string())?)?;
    let lrs: Vec<f64> = parse_list(&settings.get_or(args.lrs, "lrs", DEFAULT_LRS.to_string())?)?;
    ensure_dir(&spec.out)?;

    let mut rows = Vec::new();
    for &alpha in &alphas {
        for &lr in &lrs {
            let cfg = TrainConfig {
                alpha,
                lr,
                ..spec.train.clone()
            };
            let dir = spec.out.join(format!("alpha{alpha}_lr{lr}"));
            println!("training alpha={alpha} lr={lr} -> {}", dir.display());
            let mut trainer = Trainer::new(cfg)?;
            let epochs = trainer.cfg.epochs;
            trainer.run(epochs, Some(&dir), super::train::print_epoch)?;
            let h = &trainer.history;
            rows.push(SweepRow {
                alpha,
                lr,
                tour_length: h.last().map_or(f64::NAN, |m| m.mean_val_length),
                best_length: h.iter().map(|m| m.mean_val_length).fold(f64::INFINITY, f64::min),
                epochs: h.len(),
            });
        }
    }

    let csv_path = spec.out.join("sweep.csv");
    let mut w = csv_writer(&csv_path)?;
    w.write_record(["alpha", "lr", "tour_length", "best_tour_length", "epochs"])
        .map_err(|e| CliError::csv(&csv_path, e))?;
    for r in &rows {
        w.write_record([
            r.alpha.to_string(),
            r.lr.to_string(),
            r.tour_length.to_string(),
            r.best_length.to_string(),
            r.epochs.to_string(),
        ])
        .map_err(|e| CliError::csv(&csv_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;

    // one row per coefficient, one column per learning rate
    let mut header = vec!["alpha".to_string()];
    header.extend(lrs.iter().map(|lr| format!("TourL lr={lr}")));
    let text_rows: Vec<Vec<String>> = alphas
        .iter()
        .map(|&a| {
            let mut row = vec![a.to_string()];
            for &lr in &lrs {
                let cell = rows
                    .iter()
                    .find(|r| r.alpha == a && r.lr == lr)
                    .map_or(String::new(), |r| format!("{:.4}", r.tour_length));
                row.push(cell);
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let text = table::render(&header_refs, &text_rows);
    write_text(&spec.out.join("sweep.txt"), &text)?;
    print!("{text}");
    println!("sweep table: {}", csv_path.display());
    Ok(())
}

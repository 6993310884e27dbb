use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "errl", version, about = "Learned routing heuristics: generate, train, sweep, eval, curves")]
pub struct Cli {
    /// Flat `key = value` file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a file of random instances.
    Generate(GenerateArgs),
    /// Train a policy; writes checkpoint.json and metrics.csv.
    Train(TrainArgs),
    /// Train once per (alpha, lr) pair and tabulate final validation lengths.
    Sweep(SweepArgs),
    /// Benchmark a checkpoint and/or classical heuristics on an instance file.
    Eval(EvalArgs),
    /// Merge metrics CSVs into learning-curve tables.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// tsp, cvrp or mrpff.
    #[arg(long)]
    pub kind: Option<String>,
    /// Cities (TSP) or customers (CVRP, MRPFF).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub count: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainOptions {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Network size: desk, full or tiny.
    #[arg(long)]
    pub profile: Option<String>,
    /// errl1 or errl2.
    #[arg(long)]
    pub trainer: Option<String>,
    /// shared-mean, greedy-rollout or none (errl1 only).
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub traj_per_instance: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub validation_size: Option<usize>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Fold the entropy bonus into the reward instead of the objective.
    #[arg(long)]
    pub entropy_in_reward: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub opts: TrainOptions,
    /// Continue from this checkpoint (its configuration is kept; --epochs may extend it).
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub opts: TrainOptions,
    /// Comma-separated entropy coefficients (default 0.5,0.6,0.7,0.8,0.9).
    #[arg(long)]
    pub alphas: Option<String>,
    /// Comma-separated learning rates (default 1e-5,1e-4).
    #[arg(long)]
    pub lrs: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained policy; without it only heuristics run.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Instance file (JSON lines).
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// greedy, sample:K or beam:W; repeatable or comma-separated.
    #[arg(long)]
    pub mode: Vec<String>,
    /// Also report every mode followed by 2-opt.
    #[arg(long)]
    pub two_opt: bool,
    /// Heuristics: nn, ni, ri, fi, all or none (default all for TSP).
    #[arg(long)]
    pub baselines: Option<String>,
    /// Seed for sampling modes.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Metrics files, each optionally prefixed with `label=`.
    pub inputs: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

//! `errl`: dataset generation, training, sweeps, evaluation tables and
//! learning-curve export.

mod cli;
mod commands;
mod error;
mod settings;
mod spec;
mod table;

use clap::Parser;

use crate::cli::Cli;
use crate::error::CliError;

/// Worker thread count for rollouts and evaluation.
const THREADS_ENV: &str = "ERRL_THREADS";

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    if n == 0 {
        return Err(CliError::Usage(format!("{THREADS_ENV} must be at least 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = init_threads().and_then(|()| commands::dispatch(cli));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() {
    std::process::exit(run());
}

mod curves;
mod eval;
mod generate;
mod sweep;
mod train;

use std::fs;
use std::path::Path;

use crate::cli::{Cli, Command};
use crate::error::CliError;
use crate::settings::Settings;

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => generate::run(&settings, a),
        Command::Train(a) => train::run(&settings, a),
        Command::Sweep(a) => sweep::run(&settings, a),
        Command::Eval(a) => eval::run(&settings, a),
        Command::Curves(a) => curves::run(&settings, a),
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))
}

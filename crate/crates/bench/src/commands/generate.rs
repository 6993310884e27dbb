use std::path::PathBuf;

use errl::routing::{generate_instances, io::write_instances};

use super::ensure_dir;
use crate::cli::GenerateArgs;
use crate::error::CliError;
use crate::settings::Settings;
use crate::spec::parse_kind;

pub fn run(settings: &Settings, args: GenerateArgs) -> Result<(), CliError> {
    let kind = parse_kind(&settings.get_or(args.problem.kind, "kind", "tsp".to_string())?)?;
    let n = settings.get_or(args.problem.n, "n", 20)?;
    let count = settings.get_or(args.count, "count", 1000)?;
    let seed = settings.get_or(args.problem.seed, "seed", 1)?;
    let out = settings.get_or(args.out, "out", PathBuf::from("."))?;
    let instances = generate_instances(kind, n, count, seed)?;
    ensure_dir(&out)?;
    let path = out.join(format!("{kind}{n}_{count}_seed{seed}.jsonl"));
    write_instances(&path, &instances)?;
    println!("{}", path.display());
    Ok(())
}

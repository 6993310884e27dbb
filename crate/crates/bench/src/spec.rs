use std::path::PathBuf;
use std::str::FromStr;

use errl::heuristics::{farthest_insertion, nearest_insertion, nearest_neighbor, random_insertion};
use errl::policy::Hyper;
use errl::routing::{Instance, ProblemKind, Solution};
use errl::search::{SearchConfig, SearchMode};
use errl::training::{BaselineKind, TrainConfig, TrainerKind};

use crate::cli::TrainOptions;
use crate::error::CliError;
use crate::settings::Settings;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heuristic {
    NearestNeighbor,
    NearestInsertion,
    RandomInsertion,
    FarthestInsertion,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [
        Heuristic::NearestNeighbor,
        Heuristic::NearestInsertion,
        Heuristic::RandomInsertion,
        Heuristic::FarthestInsertion,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Heuristic::NearestNeighbor => "nearest-neighbor",
            Heuristic::NearestInsertion => "nearest-insertion",
            Heuristic::RandomInsertion => "random-insertion",
            Heuristic::FarthestInsertion => "farthest-insertion",
        }
    }

    pub fn run(self, inst: &Instance, seed: u64) -> errl::Result<Solution> {
        match self {
            Heuristic::NearestNeighbor => nearest_neighbor(inst),
            Heuristic::NearestInsertion => nearest_insertion(inst),
            Heuristic::RandomInsertion => random_insertion(inst, seed),
            Heuristic::FarthestInsertion => farthest_insertion(inst),
        }
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nn" | "nearest-neighbor" | "nearest-neighbour" => Ok(Heuristic::NearestNeighbor),
            "ni" | "nearest-insertion" => Ok(Heuristic::NearestInsertion),
            "ri" | "random-insertion" => Ok(Heuristic::RandomInsertion),
            "fi" | "farthest-insertion" => Ok(Heuristic::FarthestInsertion),
            other => Err(format!("unknown heuristic '{other}'")),
        }
    }
}

/// `all`, `none` or a comma-separated list of heuristic names.
pub fn parse_heuristics(text: &str) -> Result<Vec<Heuristic>, CliError> {
    match text.trim() {
        "all" => Ok(Heuristic::ALL.to_vec()),
        "none" | "" => Ok(Vec::new()),
        list => list
            .split(',')
            .map(|s| s.parse().map_err(CliError::Usage))
            .collect(),
    }
}

/// `greedy`, `sample:K` or `beam:W`.
pub fn parse_mode(text: &str, seed: u64) -> Result<SearchMode, CliError> {
    let text = text.trim();
    let bad = || CliError::Usage(format!("bad search mode '{text}' (expected greedy, sample:K or beam:W)"));
    let mode = match text.split_once(':') {
        None if text == "greedy" => SearchMode::Greedy,
        Some(("sample", k)) => SearchMode::Sample {
            k: k.parse().map_err(|_| bad())?,
            seed,
        },
        Some(("beam", w)) => SearchMode::Beam {
            width: w.parse().map_err(|_| bad())?,
        },
        _ => return Err(bad()),
    };
    mode.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(mode)
}

pub fn parse_kind(text: &str) -> Result<ProblemKind, CliError> {
    text.parse().map_err(|e: errl::Error| CliError::Usage(e.to_string()))
}

pub fn parse_profile(text: &str) -> Result<Hyper, CliError> {
    match text {
        "desk" => Ok(Hyper::desk()),
        "full" => Ok(Hyper::full()),
        "tiny" => Ok(Hyper::tiny()),
        other => Err(CliError::Usage(format!("unknown profile '{other}' (desk, full or tiny)"))),
    }
}

/// One fully resolved experiment: what to train and how to evaluate it.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ProblemKind,
    pub n: usize,
    pub train: TrainConfig,
    pub search: Vec<SearchConfig>,
    pub baselines: Vec<Heuristic>,
    pub out: PathBuf,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Training part of a spec from flags and config file.
    pub fn for_training(settings: &Settings, opts: &TrainOptions, default_out: &str) -> Result<Self, CliError> {
        let kind = parse_kind(&settings.get_or(opts.problem.kind.clone(), "kind", "tsp".to_string())?)?;
        let n = settings.get_or(opts.problem.n, "n", 20)?;
        let seed = settings.get_or(opts.problem.seed, "seed", 1)?;
        let trainer = match settings.get_or(opts.trainer.clone(), "trainer", "errl1".to_string())?.as_str() {
            "errl1" => TrainerKind::Errl1,
            "errl2" => TrainerKind::Errl2,
            other => return Err(CliError::Usage(format!("unknown trainer '{other}' (errl1 or errl2)"))),
        };
        let mut cfg = match trainer {
            TrainerKind::Errl1 => TrainConfig::desk(kind, n),
            TrainerKind::Errl2 => TrainConfig::errl2(kind, n),
        };
        cfg.seed = seed;
        if let Some(p) = settings.get(opts.profile.clone(), "profile")? {
            cfg.hyper = parse_profile(&p)?;
        }
        if let Some(b) = settings.get(opts.baseline.clone(), "baseline")? {
            cfg.baseline = match b.as_str() {
                "shared-mean" => BaselineKind::SharedMean,
                "greedy-rollout" => BaselineKind::GreedyRollout,
                "none" => BaselineKind::None,
                other => return Err(CliError::Usage(format!("unknown baseline '{other}'"))),
            };
        }
        cfg.alpha = settings.get_or(opts.alpha, "alpha", cfg.alpha)?;
        cfg.lr = settings.get_or(opts.lr, "lr", cfg.lr)?;
        cfg.batch_size = settings.get_or(opts.batch, "batch", cfg.batch_size)?;
        cfg.trajectories_per_instance =
            settings.get_or(opts.traj_per_instance, "traj-per-instance", cfg.trajectories_per_instance)?;
        cfg.epochs = settings.get_or(opts.epochs, "epochs", cfg.epochs)?;
        cfg.steps_per_epoch = settings.get_or(opts.steps_per_epoch, "steps-per-epoch", cfg.steps_per_epoch)?;
        cfg.validation_size = settings.get_or(opts.validation_size, "validation-size", cfg.validation_size)?;
        cfg.grad_clip_norm = settings.get_or(opts.grad_clip, "grad-clip", cfg.grad_clip_norm)?;
        cfg.weight_decay = settings.get_or(opts.weight_decay, "weight-decay", cfg.weight_decay)?;
        cfg.entropy_in_reward = settings.switch(opts.entropy_in_reward, "entropy-in-reward")?;
        let out = settings.get_or(opts.out.clone(), "out", PathBuf::from(default_out))?;
        let name = settings.get_or(None, "name", format!("{kind}{n}"))?;
        let spec = ExperimentSpec {
            name,
            kind,
            n,
            train: cfg,
            search: Vec::new(),
            baselines: Vec::new(),
            out,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.trim().is_empty() {
            return Err(CliError::Usage("experiment name must not be empty".into()));
        }
        self.train.validate()?;
        for s in &self.search {
            s.mode.validate()?;
            s.two_opt.validate()?;
        }
        Ok(())
    }
}

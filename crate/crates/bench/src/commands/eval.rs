use std::path::PathBuf;
use std::time::Instant;

use errl::policy::PolicyParams;
use errl::routing::{io::read_instances, Instance, ProblemKind};
use errl::search::{evaluate_gap, reference_lengths, solve, SearchConfig};
use errl::training::{Checkpoint, TrainConfig};
use rayon::prelude::*;

use super::{csv_writer, ensure_dir, write_text};
use crate::cli::EvalArgs;
use crate::error::CliError;
use crate::settings::Settings;
use crate::spec::{parse_heuristics, parse_mode, ExperimentSpec, Heuristic};
use crate::table;

#[derive(Debug, Clone)]
enum Method {
    Baseline(Heuristic),
    Policy(SearchConfig),
}

impl Method {
    fn label(&self) -> String {
        match self {
            Method::Baseline(h) => h.label().to_string(),
            Method::Policy(cfg) => cfg.label(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    length: f64,
    seconds: f64,
    candidates: usize,
}

fn run_method(method: &Method, inst: &Instance, params: Option<&PolicyParams>) -> errl::Result<Outcome> {
    match method {
        Method::Baseline(h) => {
            let start = Instant::now();
            // random insertion draws its order from the instance's own seed
            let sol = h.run(inst, inst.seed())?;
            Ok(Outcome {
                length: sol.total_length(),
                seconds: start.elapsed().as_secs_f64(),
                candidates: 1,
            })
        }
        Method::Policy(cfg) => {
            let params = params.expect("policy methods need a checkpoint");
            let (sol, m) = solve(inst, params, cfg)?;
            Ok(Outcome {
                length: sol.total_length(),
                seconds: m.seconds,
                candidates: m.candidates_evaluated,
            })
        }
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    s / c as f64
}

pub fn run(settings: &Settings, args: EvalArgs) -> Result<(), CliError> {
    let instances_path: PathBuf = settings
        .get(args.instances, "instances")?
        .ok_or_else(|| CliError::Usage("eval needs --instances".into()))?;
    let checkpoint: Option<PathBuf> = settings.get(args.checkpoint, "checkpoint")?;
    let seed = settings.get_or(args.seed, "seed", 1)?;
    let out = settings.get_or(args.out, "out", PathBuf::from("runs/eval"))?;
    let two_opt = settings.switch(args.two_opt, "two-opt")?;

    let instances = read_instances(&instances_path)?;
    let Some(first) = instances.first() else {
        return Err(CliError::Data(format!("{} holds no instances", instances_path.display())));
    };
    let kind = first.kind();
    if instances.iter().any(|i| i.kind() != kind) {
        return Err(CliError::Data(format!("{} mixes problem kinds", instances_path.display())));
    }

    let mut train_cfg = None;
    let params = match &checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config.kind != kind {
                return Err(CliError::Data(format!(
                    "checkpoint {} was trained on {} but the instances are {kind}",
                    path.display(),
                    ck.config.kind
                )));
            }
            train_cfg = Some(ck.config.clone());
            Some(ck.params()?)
        }
        None => None,
    };

    let mode_texts: Vec<String> = if args.mode.is_empty() {
        match settings.raw("mode") {
            Some(m) => vec![m.to_string()],
            None if params.is_some() => vec!["greedy".to_string()],
            None => Vec::new(),
        }
    } else {
        args.mode
    };
    let default_baselines = if kind == ProblemKind::Tsp { "all" } else { "none" };
    let mut search = Vec::new();
    for text in mode_texts.iter().flat_map(|m| m.split(',')).filter(|m| !m.trim().is_empty()) {
        if params.is_none() {
            return Err(CliError::Usage(format!("mode '{text}' needs --checkpoint")));
        }
        let mode = parse_mode(text, seed)?;
        search.push(SearchConfig::with_mode(mode));
        if two_opt {
            search.push(SearchConfig::with_mode(mode).with_two_opt(true));
        }
    }
    let spec = ExperimentSpec {
        name: settings.get_or(None, "name", format!("{kind}{}", first.num_customers()))?,
        kind,
        n: first.num_customers(),
        train: train_cfg.unwrap_or_else(|| TrainConfig::desk(kind, first.num_customers())),
        search,
        baselines: parse_heuristics(&settings.get_or(args.baselines, "baselines", default_baselines.to_string())?)?,
        out,
        seed,
    };
    spec.validate()?;
    let methods: Vec<Method> = spec
        .baselines
        .iter()
        .map(|&h| Method::Baseline(h))
        .chain(spec.search.iter().cloned().map(Method::Policy))
        .collect();
    if methods.is_empty() {
        return Err(CliError::Usage("nothing to evaluate: no baselines and no checkpoint".into()));
    }

    // outcomes[i][m]: instance i, method m
    let outcomes: Vec<Vec<Outcome>> = instances
        .par_iter()
        .map(|inst| {
            methods
                .iter()
                .map(|m| run_method(m, inst, params.as_ref()))
                .collect::<errl::Result<Vec<_>>>()
        })
        .collect::<errl::Result<_>>()?;

    let per_method: Vec<Vec<f64>> = (0..methods.len())
        .map(|m| outcomes.iter().map(|row| row[m].length).collect())
        .collect();
    let (reference, ref_kind) = reference_lengths(&instances, &per_method)?;

    let out = &spec.out;
    ensure_dir(out)?;
    let eval_path = out.join("eval.csv");
    let mut w = csv_writer(&eval_path)?;
    w.write_record(["instance_id", "method", "length", "gap_pct", "seconds", "candidates_evaluated"])
        .map_err(|e| CliError::csv(&eval_path, e))?;
    for (i, row) in outcomes.iter().enumerate() {
        for (m, o) in methods.iter().zip(row) {
            let gap = (o.length / reference[i] - 1.0) * 100.0;
            w.write_record([
                i.to_string(),
                m.label(),
                o.length.to_string(),
                gap.to_string(),
                o.seconds.to_string(),
                o.candidates.to_string(),
            ])
            .map_err(|e| CliError::csv(&eval_path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(&eval_path, e))?;

    let summary_path = out.join("summary.csv");
    let mut w = csv_writer(&summary_path)?;
    w.write_record(["method", "tour_length", "gap_pct", "seconds", "reference"])
        .map_err(|e| CliError::csv(&summary_path, e))?;
    let mut rows = Vec::new();
    for (m, method) in methods.iter().enumerate() {
        let length = mean(per_method[m].iter().copied());
        let gap = evaluate_gap(&per_method[m], &reference)?;
        let seconds = mean(outcomes.iter().map(|row| row[m].seconds));
        w.write_record([
            method.label(),
            length.to_string(),
            gap.to_string(),
            seconds.to_string(),
            ref_kind.label().to_string(),
        ])
        .map_err(|e| CliError::csv(&summary_path, e))?;
        rows.push(vec![
            method.label(),
            format!("{length:.4}"),
            format!("{gap:.2}"),
            format!("{seconds:.4}"),
        ]);
    }
    w.flush().map_err(|e| CliError::io(&summary_path, e))?;

    // Time(s): mean wall time of one instance's search, model loading excluded
    let mut text = table::render(&["Method", "TourL", "Gap(%)", "Time(s)"], &rows);
    text.push_str(&format!(
        "{}: {} instances of {kind}, gaps against {} lengths\n",
        spec.name,
        instances.len(),
        ref_kind.label()
    ));
    write_text(&out.join("table.txt"), &text)?;
    print!("{text}");
    Ok(())
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{csv_writer, ensure_dir};
use crate::cli::CurvesArgs;
use crate::error::CliError;
use crate::settings::Settings;

const COLUMNS: [&str; 6] = ["epoch", "mean_val_length", "mean_entropy", "baseline_mean", "grad_norm", "seconds"];

struct Curve {
    label: String,
    rows: Vec<(usize, Vec<String>)>,
}

fn default_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    if stem == "metrics" {
        if let Some(dir) = path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()) {
            return dir.to_string();
        }
    }
    stem.to_string()
}

fn read_curve(label: String, path: &Path) -> Result<Curve, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Data(format!("{}: {other:?}", path.display())),
    })?;
    let headers = r.headers().map_err(|e| CliError::csv(path, e))?.clone();
    let index: Vec<usize> = COLUMNS
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| CliError::Data(format!("{}: missing column '{c}'", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let cells: Vec<String> = index.iter().map(|&i| rec.get(i).unwrap_or("").to_string()).collect();
        for (c, v) in COLUMNS.iter().zip(&cells) {
            if v.parse::<f64>().is_err() {
                return Err(CliError::Data(format!(
                    "{}: row {}: bad {c} value '{v}'",
                    path.display(),
                    line + 2
                )));
            }
        }
        let epoch = cells[0]
            .parse()
            .map_err(|_| CliError::Data(format!("{}: row {}: bad epoch '{}'", path.display(), line + 2, cells[0])))?;
        rows.push((epoch, cells));
    }
    Ok(Curve { label, rows })
}

pub fn run(settings: &Settings, args: CurvesArgs) -> Result<(), CliError> {
    if args.inputs.is_empty() {
        return Err(CliError::Usage("curves needs at least one metrics file".into()));
    }
    let out = settings.get_or(args.out, "out", PathBuf::from("runs/curves"))?;
    let mut curves = Vec::new();
    for input in &args.inputs {
        let (label, path) = match input.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => (default_label(Path::new(input)), PathBuf::from(input)),
        };
        if curves.iter().any(|c: &Curve| c.label == label) {
            return Err(CliError::Usage(format!("duplicate run label '{label}'")));
        }
        curves.push(read_curve(label, &path)?);
    }
    ensure_dir(&out)?;

    let long_path = out.join("curves_long.csv");
    let mut w = csv_writer(&long_path)?;
    let mut header = vec!["run"];
    header.extend(COLUMNS);
    w.write_record(&header).map_err(|e| CliError::csv(&long_path, e))?;
    for c in &curves {
        for (_, cells) in &c.rows {
            let mut rec = vec![c.label.as_str()];
            rec.extend(cells.iter().map(String::as_str));
            w.write_record(&rec).map_err(|e| CliError::csv(&long_path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(&long_path, e))?;

    // epochs present in any run; cells stay empty where a run has no row
    let mut wide: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (k, c) in curves.iter().enumerate() {
        for (epoch, cells) in &c.rows {
            wide.entry(*epoch).or_insert_with(|| vec![String::new(); curves.len()])[k] = cells[1].clone();
        }
    }
    let wide_path = out.join("curves_wide.csv");
    let mut w = csv_writer(&wide_path)?;
    let mut header = vec!["epoch".to_string()];
    header.extend(curves.iter().map(|c| c.label.clone()));
    w.write_record(&header).map_err(|e| CliError::csv(&wide_path, e))?;
    for (epoch, cells) in &wide {
        let mut rec = vec![epoch.to_string()];
        rec.extend(cells.iter().cloned());
        w.write_record(&rec).map_err(|e| CliError::csv(&wide_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&wide_path, e))?;

    println!("{}", long_path.display());
    println!("{}", wide_path.display());
    Ok(())
}

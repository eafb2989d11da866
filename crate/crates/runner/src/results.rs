//! Result files: the shared CSV schema and the metrics summary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use openloop::metrics::{self, EvalReport, ReportOptions, ScoreRow, ScoreTable};
use openloop::perturb::RobustnessReport;

use crate::optimize::RunRecord;
use crate::Failure;

pub const CSV_HEADER: &str = "env,method,variant,seed,generation,return";

/// One row per generation with the best return seen so far.
pub fn record_rows(record: &RunRecord) -> Vec<ScoreRow> {
    record
        .generations
        .iter()
        .map(|g| ScoreRow {
            env: record.config.env.clone(),
            method: record.config.method.clone(),
            variant: record.config.variant.name().to_string(),
            seed: record.seed,
            generation: g.generation as u64,
            value: g.best_so_far,
        })
        .collect()
}

/// One row per (setting, seed); the method column carries the setting label
/// and the unperturbed baseline is labelled `unperturbed`.
pub fn robustness_rows(env: &str, variant: &str, report: &RobustnessReport) -> Vec<ScoreRow> {
    let row = |method: &str, seed: u64, value: f64| ScoreRow {
        env: env.to_string(),
        method: method.to_string(),
        variant: variant.to_string(),
        seed,
        generation: 0,
        value,
    };
    let mut rows: Vec<ScoreRow> = report
        .seeds
        .iter()
        .zip(&report.baseline)
        .map(|(&s, &v)| row("unperturbed", s, v))
        .collect();
    for entry in &report.entries {
        rows.extend(report.seeds.iter().zip(&entry.returns).map(|(&s, &v)| row(&entry.label, s, v)));
    }
    rows
}

pub fn write_csv(path: &Path, rows: &[ScoreRow]) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(Failure::runtime)?;
    }
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(Failure::runtime)?;
    writer.write_record(CSV_HEADER.split(',')).map_err(Failure::runtime)?;
    for row in rows {
        writer.serialize(row).map_err(Failure::runtime)?;
    }
    writer.flush().map_err(Failure::runtime)
}

pub fn read_csv(path: &Path) -> Result<Vec<ScoreRow>, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(Failure::Config(format!(
            "{} has header `{}`, expected `{CSV_HEADER}`",
            path.display(),
            header.join(",")
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Failure::Config(format!("{}: {e}", path.display()))))
        .collect()
}

/// All `*.csv` files directly inside `dir`, sorted by name.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Config(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Config(format!("no CSV files in {}", dir.display())));
    }
    Ok(files)
}

pub fn summarize_dir(dir: &Path, options: &ReportOptions) -> Result<EvalReport, Failure> {
    let mut rows = Vec::new();
    for file in csv_files(dir)? {
        rows.extend(read_csv(&file)?);
    }
    let table = ScoreTable::from_rows(rows).map_err(|e| Failure::Config(e.to_string()))?;
    metrics::report(&table, options).map_err(|e| Failure::Config(e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(Failure::runtime)?;
    }
    let mut f = fs::File::create(path).map_err(Failure::runtime)?;
    f.write_all(text.as_bytes()).map_err(Failure::runtime)
}

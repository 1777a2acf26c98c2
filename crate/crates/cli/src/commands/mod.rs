pub mod compress;
pub mod cri;
pub mod psi;
pub mod report;
pub mod run;
pub mod simulate;
pub mod stats;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use psibench_core::metrics::EnergyModel;
use psibench_core::prompt_structure::{builtin, BenchmarkProfile};
use psibench_core::report::{read_cell_csv, reference_cells, CellRow, ReportFormat, ReportTable};
use psibench_core::stats::summarize_all;
use psibench_core::trial_engine::{read_log, TrialRecord};

use crate::error::CliError;
use crate::Global;

/// `NAME=WEIGHT`.
pub fn parse_weight(kv: &str) -> Result<(String, f64), String> {
    let (k, v) = kv
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=WEIGHT, got {kv:?}"))?;
    let w = v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"))?;
    Ok((k.trim().to_string(), w))
}

/// `NAME=WEIGHT,...`.
pub fn parse_weights(s: &str) -> Result<Vec<(String, f64)>, String> {
    s.split(',').map(parse_weight).collect()
}

/// A profile file path, or the name of a bundled profile.
pub fn resolve_profile(spec: &str) -> Result<BenchmarkProfile, CliError> {
    let path = Path::new(spec);
    if path.exists() {
        return BenchmarkProfile::load(path).map_err(|e| CliError::from(e).context(spec));
    }
    builtin::get(spec).ok_or_else(|| {
        CliError::new(
            "config",
            format!("profile {spec:?} is neither a file nor a bundled profile (mbpp, humaneval, gsm8k)"),
        )
    })
}

/// Renders tables to `--out` or standard output.
pub fn emit(global: &Global, tables: &[ReportTable]) -> Result<(), CliError> {
    let body = render_all(tables, global.format);
    match &global.out {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::from(e).context(p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

pub fn render_all(tables: &[ReportTable], format: ReportFormat) -> String {
    tables
        .iter()
        .map(|t| match format {
            // Titles keep concatenated CSV tables distinguishable.
            ReportFormat::Csv => format!("# {}\n{}", t.title, t.to_csv()),
            f => t.render(f),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

/// Where aggregate cell statistics come from.
#[derive(Args, Debug, Clone)]
pub struct DataSource {
    /// Trial record files (JSONL).
    pub records: Vec<PathBuf>,
    /// Use the bundled 36-cell reference dataset.
    #[arg(long, conflicts_with_all = ["records", "cells"])]
    pub fixture: bool,
    /// Cell-summary CSV (model, benchmark, ratio, mean_tout, sd, ceiling_pct, pass1, energy_mj).
    #[arg(long, conflicts_with = "records")]
    pub cells: Option<PathBuf>,
}

pub struct Loaded {
    pub rows: Vec<CellRow>,
    /// Sample-level records, when the source has them.
    pub records: Option<Vec<TrialRecord>>,
}

pub fn load_records(paths: &[PathBuf]) -> Result<Vec<TrialRecord>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        let contents = read_log(p).map_err(|e| CliError::from(e).context(p.display()))?;
        for bad in &contents.malformed {
            warn(format!("{}: skipped {bad}", p.display()));
        }
        if !contents.errors.is_empty() {
            warn(format!(
                "{}: {} trial error entries ignored",
                p.display(),
                contents.errors.len()
            ));
        }
        out.extend(contents.records);
    }
    if out.is_empty() {
        warn("no trial records found; tables will be empty");
    }
    Ok(out)
}

impl DataSource {
    pub fn load(&self, energy: &EnergyModel) -> Result<Loaded, CliError> {
        if self.fixture {
            return Ok(Loaded {
                rows: reference_cells(),
                records: None,
            });
        }
        if let Some(p) = &self.cells {
            let file = std::fs::File::open(p).map_err(|e| CliError::from(e).context(p.display()))?;
            let (rows, errors) = read_cell_csv(file);
            for e in errors {
                warn(format!("{}: skipped {e}", p.display()));
            }
            return Ok(Loaded { rows, records: None });
        }
        if self.records.is_empty() {
            return Err(CliError::usage("give record files, --cells FILE or --fixture"));
        }
        let records = load_records(&self.records)?;
        let rows = summarize_all(&records)
            .iter()
            .map(|s| CellRow::from_summary(s, energy))
            .collect();
        Ok(Loaded {
            rows,
            records: Some(records),
        })
    }
}

/// Distinct benchmarks in first-seen order.
pub fn benchmarks_of(rows: &[CellRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.benchmark) {
            out.push(r.benchmark.clone());
        }
    }
    out
}

pub fn models_of(rows: &[CellRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.model) {
            out.push(r.model.clone());
        }
    }
    out
}

use std::path::PathBuf;

use clap::Args;
use psibench_core::report::{infer_cell, stats_table};
use psibench_core::trial_engine::{CellKey, TrialRecord};

use super::{emit, load_records, warn};
use crate::error::CliError;
use crate::settings::Settings;
use crate::Global;

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Trial record files (JSONL).
    #[arg(required = true)]
    pub records: Vec<PathBuf>,
    /// Only cells at this ratio.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Generation ceiling for censoring (default: tmax from settings).
    #[arg(long)]
    pub ceiling: Option<f64>,
    /// Bootstrap resamples for the mean interval.
    #[arg(long)]
    pub resamples: Option<usize>,
}

pub fn execute(global: &Global, args: &StatsArgs) -> Result<(), CliError> {
    let settings = Settings::load(global.config.as_deref(), global.seed)?;
    let records = load_records(&args.records)?;
    let ceiling = args.ceiling.unwrap_or(settings.tmax);
    let mut cells: Vec<CellKey> = records.iter().map(TrialRecord::cell).collect();
    cells.sort();
    cells.dedup();
    let mut inferences = Vec::new();
    for cell in cells {
        if args.ratio.is_some_and(|r| (r - cell.ratio).abs() > 1e-9) {
            continue;
        }
        match infer_cell(&records, &cell, ceiling, settings.bootstrap(args.resamples)) {
            Ok(i) => inferences.push(i),
            Err(e) => warn(format!("{}/{}/{}: {e}", cell.model, cell.benchmark, cell.ratio)),
        }
    }
    emit(global, &[stats_table(&inferences)])
}

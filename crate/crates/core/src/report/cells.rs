use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::metrics::EnergyModel;
use crate::stats::CellSummary;
use crate::trial_engine::{CellKey, LineError};

const REFERENCE_CSV: &str = include_str!("../../data/fixtures/reference_cells.csv");

/// Aggregate statistics for one cell, as stored in a cell-summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub model: String,
    pub benchmark: String,
    pub ratio: f64,
    pub mean_tout: f64,
    pub sd: f64,
    /// Percentage of trials at the ceiling, 0 to 100.
    pub ceiling_pct: f64,
    pub pass1: Option<f64>,
    pub energy_mj: Option<f64>,
}

impl CellRow {
    pub fn cell(&self) -> CellKey {
        CellKey::new(&self.model, &self.benchmark, self.ratio)
    }

    pub fn from_summary(s: &CellSummary, energy: &EnergyModel) -> Self {
        Self {
            model: s.cell.model.clone(),
            benchmark: s.cell.benchmark.clone(),
            ratio: s.cell.ratio,
            mean_tout: s.mean_tout,
            sd: s.sd,
            ceiling_pct: 100.0 * s.ceiling_fraction,
            pass1: s.pass1_rate,
            energy_mj: Some(energy.energy(s.mean_tin, s.mean_tout)),
        }
    }
}

/// Parses a cell-summary CSV. Bad rows are reported with their line number
/// and skipped.
pub fn read_cell_csv(reader: impl Read) -> (Vec<CellRow>, Vec<LineError>) {
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut rdr = csv::Reader::from_reader(reader);
    for (i, rec) in rdr.deserialize::<CellRow>().enumerate() {
        match rec {
            Ok(r) => rows.push(r),
            Err(e) => errors.push(LineError {
                line: e.position().map_or(i + 2, |p| p.line() as usize),
                message: e.to_string(),
            }),
        }
    }
    (rows, errors)
}

/// The bundled 36-cell reference dataset: three models, three benchmarks,
/// four ratios.
pub fn reference_cells() -> Vec<CellRow> {
    let (rows, errors) = read_cell_csv(REFERENCE_CSV.as_bytes());
    assert!(errors.is_empty(), "bundled fixture parses");
    rows
}

pub fn find<'a>(rows: &'a [CellRow], model: &str, benchmark: &str, ratio: f64) -> Option<&'a CellRow> {
    let key = CellKey::new(model, benchmark, ratio);
    rows.iter().find(|r| r.cell() == key)
}

/// Distinct values of `f` in first-seen order.
pub(crate) fn distinct<'a>(rows: &'a [CellRow], f: impl Fn(&'a CellRow) -> &'a str) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for r in rows {
        let v = f(r);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

//! Censoring-aware statistics for output-length data.

pub mod bootstrap;
pub mod normal;
pub mod threshold;
pub mod tobit;
pub mod welch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trial_engine::{CellKey, TrialRecord};

pub use bootstrap::{bootstrap_bca, BootstrapCi, BootstrapConfig};
pub use threshold::{fit_threshold_model, ThresholdFit};
pub use tobit::{tobit_fit, truncated_mean, TobitFit, TobitIterate, TobitMethod};
pub use welch::{welch_t, WelchResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("cell has no records")]
    EmptyCell,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("test is degenerate: both samples have zero variance (t={t}, p={p})")]
    DegenerateTest { t: f64, p: f64 },
    #[error("all observations are censored; the latent mean is not identifiable")]
    Unidentifiable,
    #[error("optimiser did not converge after {} iterations", trace.len())]
    ConvergenceFailure { trace: Vec<TobitIterate> },
    #[error("no candidate breakpoint has enough points on both sides")]
    NoBreakpoint,
}

/// Sample mean and unbiased (n - 1) variance.
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Descriptive statistics of one (model, benchmark, ratio) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: CellKey,
    pub n_obs: usize,
    pub mean_tout: f64,
    pub sd: f64,
    pub cv: f64,
    pub ceiling_fraction: f64,
    pub pass1_rate: Option<f64>,
    pub mean_tin: f64,
}

/// Summarises the records of a single cell. Records belonging to other
/// cells are ignored.
pub fn summarize_cell<'a, I>(cell: &CellKey, records: I) -> Result<CellSummary, StatsError>
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let mut tout = Vec::new();
    let mut tin = 0.0;
    let mut hits = 0usize;
    let mut passes = 0usize;
    let mut graded = 0usize;
    for rec in records.into_iter().filter(|r| &r.cell() == cell) {
        tout.push(rec.output_tokens as f64);
        tin += rec.input_tokens as f64;
        hits += usize::from(rec.hit_ceiling);
        if let Some(p) = rec.pass1 {
            graded += 1;
            passes += usize::from(p);
        }
    }
    if tout.is_empty() {
        return Err(StatsError::EmptyCell);
    }
    let n = tout.len();
    let (mean, var) = mean_and_variance(&tout);
    let sd = var.sqrt();
    Ok(CellSummary {
        cell: cell.clone(),
        n_obs: n,
        mean_tout: mean,
        sd,
        cv: if mean > 0.0 { sd / mean } else { 0.0 },
        ceiling_fraction: hits as f64 / n as f64,
        pass1_rate: (graded > 0).then(|| passes as f64 / graded as f64),
        mean_tin: tin / n as f64,
    })
}

/// Summaries for every cell present in `records`, sorted by cell.
pub fn summarize_all(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut cells: Vec<CellKey> = records.iter().map(TrialRecord::cell).collect();
    cells.sort();
    cells.dedup();
    cells.iter().filter_map(|c| summarize_cell(c, records).ok()).collect()
}

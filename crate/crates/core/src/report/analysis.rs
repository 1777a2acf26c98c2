//! Sample-level computations over trial records.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::metrics::{cri_with_weights, BenchmarkOutcome, CriReport, MetricsError};
use crate::stats::{
    bootstrap_bca, summarize_cell, tobit_fit, welch_t, BootstrapCi, BootstrapConfig, CellSummary, StatsError, TobitFit,
    WelchResult,
};
use crate::trial_engine::{CellKey, TrialRecord};

use super::cells::{find, CellRow};

/// Replicate-averaged observations of one prompt within one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptMean {
    pub prompt_id: String,
    pub psi: f64,
    pub mean_tout: f64,
    pub pass1: Option<f64>,
    pub replicates: usize,
}

pub fn per_prompt_means(records: &[TrialRecord], cell: &CellKey) -> BTreeMap<String, PromptMean> {
    let mut acc: BTreeMap<String, (f64, f64, usize, f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| &r.cell() == cell) {
        let e = acc.entry(r.prompt_id.clone()).or_insert((r.psi, 0.0, 0, 0.0, 0));
        e.1 += r.output_tokens as f64;
        e.2 += 1;
        if let Some(p) = r.pass1 {
            e.3 += f64::from(u8::from(p));
            e.4 += 1;
        }
    }
    acc.into_iter()
        .map(|(id, (psi, sum, n, pass, graded))| {
            let m = PromptMean {
                prompt_id: id.clone(),
                psi,
                mean_tout: sum / n as f64,
                pass1: (graded > 0).then(|| pass / graded as f64),
                replicates: n,
            };
            (id, m)
        })
        .collect()
}

/// Prompts present at both ratios: `(baseline, compressed)`.
fn paired(records: &[TrialRecord], model: &str, benchmark: &str, ratio: f64) -> Vec<(PromptMean, PromptMean)> {
    let base = per_prompt_means(records, &CellKey::new(model, benchmark, 1.0));
    let comp = per_prompt_means(records, &CellKey::new(model, benchmark, ratio));
    base.into_iter()
        .filter_map(|(id, b)| comp.get(&id).map(|c| (b, c.clone())))
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// BCa interval for the explosion ratio `mean(T_r) / mean(T_0)`,
/// resampling prompts so baseline and compressed stay paired.
pub fn paired_ratio_ci(
    records: &[TrialRecord],
    model: &str,
    benchmark: &str,
    ratio: f64,
    config: BootstrapConfig,
) -> Result<BootstrapCi, StatsError> {
    let units: Vec<(f64, f64)> = paired(records, model, benchmark, ratio)
        .into_iter()
        .map(|(b, c)| (b.mean_tout, c.mean_tout))
        .collect();
    bootstrap_bca(
        &units,
        |s| mean(s.iter().map(|u| u.1)) / mean(s.iter().map(|u| u.0)),
        config,
    )
}

/// Ratio of weighted mixture means, resampling prompts across benchmarks.
pub fn mixture_ratio_ci(
    records: &[TrialRecord],
    model: &str,
    benchmarks: &[&str],
    weights: &[f64],
    ratio: f64,
    config: BootstrapConfig,
) -> Result<BootstrapCi, StatsError> {
    if benchmarks.len() != weights.len() {
        return Err(StatsError::InvalidArgument("one weight per benchmark".into()));
    }
    let units: Vec<(usize, f64, f64)> = benchmarks
        .iter()
        .enumerate()
        .flat_map(|(i, b)| {
            paired(records, model, b, ratio)
                .into_iter()
                .map(move |(p0, pr)| (i, p0.mean_tout, pr.mean_tout))
        })
        .collect();
    let k = benchmarks.len();
    bootstrap_bca(
        &units,
        |s| {
            let mut acc = vec![(0.0, 0.0, 0usize); k];
            for &(i, t0, tr) in s {
                acc[i].0 += t0;
                acc[i].1 += tr;
                acc[i].2 += 1;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for ((t0, tr, n), w) in acc.iter().zip(weights) {
                if *n == 0 {
                    return f64::NAN;
                }
                den += w * t0 / *n as f64;
                num += w * tr / *n as f64;
            }
            num / den
        },
        config,
    )
}

/// CRI outcomes for `model` at `ratio` from aggregate rows. Every
/// benchmark needs pass@1 at both ratios.
pub fn outcomes_from_rows(
    rows: &[CellRow],
    model: &str,
    benchmarks: &[&str],
    ratio: f64,
    tmax: f64,
) -> Result<Vec<BenchmarkOutcome>, MetricsError> {
    benchmarks
        .iter()
        .map(|b| {
            let missing = |what: &str| MetricsError::InvalidOutcome(format!("{model}/{b}: missing {what}"));
            let base = find(rows, model, b, 1.0).ok_or_else(|| missing("baseline cell"))?;
            let comp = find(rows, model, b, ratio).ok_or_else(|| missing("compressed cell"))?;
            Ok(BenchmarkOutcome {
                benchmark: b.to_string(),
                q0: base.pass1.ok_or_else(|| missing("baseline pass@1"))?,
                qr: comp.pass1.ok_or_else(|| missing("compressed pass@1"))?,
                t0: base.mean_tout,
                tr: comp.mean_tout,
                tmax,
            })
        })
        .collect()
}

pub fn cri_from_rows(
    rows: &[CellRow],
    model: &str,
    benchmarks: &[&str],
    ratio: f64,
    tmax: f64,
    weights: Option<&[f64]>,
) -> Result<CriReport, MetricsError> {
    let outcomes = outcomes_from_rows(rows, model, benchmarks, ratio, tmax)?;
    cri_with_weights(model, ratio, &outcomes, weights)
}

/// BCa interval for CRI, resampling graded prompts across benchmarks.
pub fn cri_ci(
    records: &[TrialRecord],
    model: &str,
    benchmarks: &[&str],
    ratio: f64,
    tmax: f64,
    config: BootstrapConfig,
) -> Result<BootstrapCi, StatsError> {
    let mut units: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
    for (i, b) in benchmarks.iter().enumerate() {
        for (p0, pr) in paired(records, model, b, ratio) {
            let (Some(q0), Some(qr)) = (p0.pass1, pr.pass1) else {
                return Err(StatsError::InsufficientData(format!(
                    "{model}/{b}: prompt {} lacks pass@1",
                    p0.prompt_id
                )));
            };
            units.push((i, q0, qr, p0.mean_tout, pr.mean_tout));
        }
    }
    let k = benchmarks.len();
    bootstrap_bca(
        &units,
        |s| {
            let mut acc = vec![[0.0f64; 5]; k];
            for &(i, q0, qr, t0, tr) in s {
                let a = &mut acc[i];
                a[0] += q0;
                a[1] += qr;
                a[2] += t0;
                a[3] += tr;
                a[4] += 1.0;
            }
            let mut total = 0.0;
            for a in &acc {
                if a[4] == 0.0 || a[0] == 0.0 {
                    return f64::NAN;
                }
                let factor = 1.0 - ((a[3] - a[2]) / a[4]).max(0.0) / tmax;
                total += a[1] / a[0] * factor;
            }
            total / k as f64
        },
        config,
    )
}

/// Per-prompt `(benchmark, prompt_id, psi, mean T_out)` for one model and ratio.
pub fn survival_points(records: &[TrialRecord], model: &str, ratio: f64) -> Vec<(String, PromptMean)> {
    let mut benchmarks: Vec<&str> = records
        .iter()
        .filter(|r| r.model == model)
        .map(|r| r.benchmark.as_str())
        .collect();
    benchmarks.sort_unstable();
    benchmarks.dedup();
    benchmarks
        .into_iter()
        .flat_map(|b| {
            per_prompt_means(records, &CellKey::new(model, b, ratio))
                .into_values()
                .map(move |m| (b.to_string(), m))
        })
        .collect()
}

/// Inference for one cell against its model/benchmark baseline.
#[derive(Debug, Clone)]
pub struct CellInference {
    pub summary: CellSummary,
    pub mean_ci: Result<BootstrapCi, StatsError>,
    pub welch_vs_baseline: Option<Result<WelchResult, StatsError>>,
    pub tobit: Option<Result<TobitFit, StatsError>>,
}

/// Summary, BCa mean interval, Welch test against the r = 1 cell, and a
/// Tobit fit when some trials hit `ceiling`.
pub fn infer_cell(
    records: &[TrialRecord],
    cell: &CellKey,
    ceiling: f64,
    config: BootstrapConfig,
) -> Result<CellInference, StatsError> {
    let summary = summarize_cell(cell, records)?;
    let tout: Vec<f64> = records
        .iter()
        .filter(|r| &r.cell() == cell)
        .map(|r| r.output_tokens as f64)
        .collect();
    let mean_ci = bootstrap_bca(&tout, |s| mean(s.iter().copied()), config);
    let welch_vs_baseline = (cell.ratio != 1.0)
        .then(|| {
            let base: Vec<f64> = records
                .iter()
                .filter(|r| r.cell() == CellKey::new(&cell.model, &cell.benchmark, 1.0))
                .map(|r| r.output_tokens as f64)
                .collect();
            (!base.is_empty()).then(|| welch_t(&tout, &base))
        })
        .flatten();
    let tobit = (summary.ceiling_fraction > 0.0).then(|| tobit_fit(&tout, ceiling));
    Ok(CellInference {
        summary,
        mean_ci,
        welch_vs_baseline,
        tobit,
    })
}

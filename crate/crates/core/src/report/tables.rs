//! Builders for the standard report tables.

use std::collections::BTreeMap;

use crate::metrics::{explosion_ratio, uniform_weights, weighted_mixture, CriReport};
use crate::stats::{BootstrapCi, ThresholdFit};

use super::analysis::{CellInference, PromptMean};
use super::cells::{distinct, find, CellRow};
use super::table::ReportTable;

/// Compressed means with at least this ceiling share are marked as lower bounds.
pub const CENSORED_MARK_PCT: f64 = 50.0;

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.decimals$}"))
}

fn ci_cell(ci: Option<&BootstrapCi>, decimals: usize) -> String {
    ci.map_or_else(
        || "-".to_string(),
        |c| format!("[{:.decimals$}, {:.decimals$}]", c.lower, c.upper),
    )
}

/// One row per cell, in input order.
pub fn cells_table(rows: &[CellRow]) -> ReportTable {
    let mut t = ReportTable::new(
        "Cell summary",
        &[
            "Model",
            "Benchmark",
            "r",
            "Mean T_out",
            "SD",
            "Ceiling %",
            "Pass@1",
            "Energy (mJ)",
        ],
    );
    for r in rows {
        t.push_row(vec![
            r.model.clone(),
            r.benchmark.clone(),
            format!("{:.1}", r.ratio),
            format!("{:.1}", r.mean_tout),
            format!("{:.1}", r.sd),
            format!("{:.0}%", r.ceiling_pct),
            opt(r.pass1, 2),
            opt(r.energy_mj, 1),
        ]);
    }
    t
}

/// A named benchmark mixture: `(label, weights by benchmark)`.
pub type Mixture = (String, BTreeMap<String, f64>);

/// Per-benchmark baseline vs compressed means for one model, followed by
/// the balanced mixture and any extra mixtures. `cis` is keyed by row label.
pub fn reconciliation_table(
    rows: &[CellRow],
    model: &str,
    ratio: f64,
    mixtures: &[Mixture],
    cis: &BTreeMap<String, BootstrapCi>,
) -> ReportTable {
    let mut t = ReportTable::new(
        format!("{model} output tokens at r={ratio:.1} by benchmark"),
        &[
            "Benchmark",
            "Baseline (r=1.0)",
            &format!("Compressed (r={ratio:.1})"),
            "Ratio",
            "95% CI",
        ],
    );
    let model_rows: Vec<CellRow> = rows.iter().filter(|r| r.model == model).cloned().collect();
    let benchmarks = distinct(&model_rows, |r| &r.benchmark);
    let mut means = BTreeMap::new();
    let mut marked = false;
    for b in &benchmarks {
        let (Some(base), Some(comp)) = (find(rows, model, b, 1.0), find(rows, model, b, ratio)) else {
            continue;
        };
        let mark = comp.ceiling_pct >= CENSORED_MARK_PCT;
        marked |= mark;
        means.insert(b.to_string(), (base.mean_tout, comp.mean_tout));
        t.push_row(vec![
            b.to_string(),
            format!("{:.1}", base.mean_tout),
            format!("{:.1}{}", comp.mean_tout, if mark { "*" } else { "" }),
            ratio_cell(base.mean_tout, comp.mean_tout),
            ci_cell(cis.get(*b), 1),
        ]);
    }
    if !means.is_empty() {
        let names: Vec<&String> = means.keys().collect();
        let balanced: BTreeMap<String, f64> = names
            .iter()
            .zip(uniform_weights(names.len()))
            .map(|(n, w)| (n.to_string(), w))
            .collect();
        let all = std::iter::once(("Balanced weighted".to_string(), balanced)).chain(mixtures.iter().cloned());
        for (label, weights) in all {
            let mut t0 = Vec::new();
            let mut tr = Vec::new();
            let mut w = Vec::new();
            for (b, weight) in &weights {
                if let Some(&(m0, mr)) = means.get(b) {
                    t0.push(m0);
                    tr.push(mr);
                    w.push(*weight);
                }
            }
            let (Ok(m0), Ok(mr)) = (weighted_mixture(&t0, &w), weighted_mixture(&tr, &w)) else {
                t.footnote(format!("{label}: weights do not cover the benchmarks present"));
                continue;
            };
            t.push_row(vec![
                label.clone(),
                format!("{m0:.1}"),
                format!("{mr:.1}"),
                ratio_cell(m0, mr),
                ci_cell(cis.get(&label), 1),
            ]);
        }
    }
    if marked {
        t.footnote(format!(
            "* at least {CENSORED_MARK_PCT:.0}% of trials hit the generation ceiling; the mean is a lower bound"
        ));
    }
    t
}

fn ratio_cell(base: f64, comp: f64) -> String {
    explosion_ratio(base, comp).map_or_else(|_| "-".to_string(), |x| format!("{x:.1}x"))
}

/// Balanced provider comparison at `ratio`.
pub fn provider_table(rows: &[CellRow], ratio: f64) -> ReportTable {
    let mut t = ReportTable::new(
        format!("Provider comparison at r={ratio:.1} (balanced benchmark composition)"),
        &[
            "Model",
            "Baseline",
            &format!("r={ratio:.1}"),
            "Ratio",
            "CV",
            "Energy (mJ)",
        ],
    );
    for model in distinct(rows, |r| &r.model) {
        let model_rows: Vec<&CellRow> = rows.iter().filter(|r| r.model == model).collect();
        let mut base = Vec::new();
        let mut comp = Vec::new();
        for b in distinct(rows, |r| &r.benchmark) {
            if let (Some(b0), Some(br)) = (
                model_rows
                    .iter()
                    .find(|r| r.benchmark == b && r.cell().ratio == 1.0 && r.ratio == 1.0),
                find(rows, model, b, ratio),
            ) {
                base.push(*b0);
                comp.push(br);
            }
        }
        if base.is_empty() {
            continue;
        }
        let m0 = mean(base.iter().map(|r| r.mean_tout));
        let mr = mean(comp.iter().map(|r| r.mean_tout));
        let energy = comp
            .iter()
            .map(|r| r.energy_mj)
            .collect::<Option<Vec<f64>>>()
            .map(|e| mean(e.into_iter()));
        t.push_row(vec![
            model.to_string(),
            format!("{m0:.1}"),
            format!("{mr:.1}"),
            ratio_cell(m0, mr),
            format!("{:.2}", mixture_cv(&comp)),
            opt(energy, 1),
        ]);
    }
    t.footnote("CV is the pooled coefficient of variation of the equal-weight mixture of cells");
    t
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Coefficient of variation of an equal-weight mixture of cells.
pub fn mixture_cv(cells: &[&CellRow]) -> f64 {
    let m = mean(cells.iter().map(|r| r.mean_tout));
    let second = mean(cells.iter().map(|r| r.sd * r.sd + r.mean_tout * r.mean_tout));
    (second - m * m).max(0.0).sqrt() / m
}

/// Robustness band for a CRI value.
pub fn interpret_cri(cri: f64) -> &'static str {
    if cri >= 0.75 {
        "Highly robust"
    } else if cri >= 0.3 {
        "Moderately robust"
    } else {
        "Compression-sensitive"
    }
}

/// CRI per model, highest first.
pub fn cri_table(reports: &[CriReport], cis: &BTreeMap<String, BootstrapCi>) -> ReportTable {
    let ratio = reports.first().map_or(0.3, |r| r.ratio);
    let mut t = ReportTable::new(
        format!("Compression Robustness Index at r={ratio:.1}"),
        &["Model", "CRI", "95% CI", "Interpretation"],
    );
    let mut sorted: Vec<&CriReport> = reports.iter().collect();
    sorted.sort_by(|a, b| b.cri.total_cmp(&a.cri));
    for r in sorted {
        t.push_row(vec![
            r.model.clone(),
            format!("{:.3}{}", r.cri, if r.exceeds_one { "+" } else { "" }),
            ci_cell(cis.get(&r.model), 3),
            interpret_cri(r.cri).to_string(),
        ]);
        if !r.excluded.is_empty() {
            t.footnote(format!(
                "{}: excluded (zero baseline pass@1): {}",
                r.model,
                r.excluded.join(", ")
            ));
        }
    }
    if reports.iter().any(|r| r.exceeds_one) {
        t.footnote("+ some compressed pass@1 exceeds its baseline; the index is not clamped");
    }
    t
}

/// Per-cell inference: mean with BCa interval, Welch test vs baseline,
/// Tobit latent mean where censored.
pub fn stats_table(cells: &[CellInference]) -> ReportTable {
    let mut t = ReportTable::new(
        "Cell inference",
        &[
            "Model",
            "Benchmark",
            "r",
            "n",
            "Mean T_out",
            "95% CI",
            "CV",
            "Ceiling %",
            "Welch t",
            "p",
            "Tobit mu",
            "Trunc. mean",
        ],
    );
    for c in cells {
        let s = &c.summary;
        let (wt, wp) = match &c.welch_vs_baseline {
            Some(Ok(w)) => (format!("{:.2}", w.t_statistic), fmt_p(w.p_value)),
            Some(Err(crate::stats::StatsError::DegenerateTest { t, p })) => (format!("{t:.2}"), fmt_p(*p)),
            _ => ("-".into(), "-".into()),
        };
        let (mu, tm) = match &c.tobit {
            Some(Ok(f)) => (format!("{:.1}", f.mu), format!("{:.1}", f.truncated_mean())),
            Some(Err(e)) => (short_error(e), "-".into()),
            None => ("-".into(), "-".into()),
        };
        t.push_row(vec![
            s.cell.model.clone(),
            s.cell.benchmark.clone(),
            format!("{:.1}", s.cell.ratio),
            s.n_obs.to_string(),
            format!("{:.1}", s.mean_tout),
            ci_cell(c.mean_ci.as_ref().ok(), 1),
            format!("{:.2}", s.cv),
            format!("{:.0}%", 100.0 * s.ceiling_fraction),
            wt,
            wp,
            mu,
            tm,
        ]);
    }
    t
}

fn fmt_p(p: f64) -> String {
    if p < 1e-3 {
        format!("{p:.1e}")
    } else {
        format!("{p:.3}")
    }
}

fn short_error(e: &crate::stats::StatsError) -> String {
    use crate::stats::StatsError::*;
    match e {
        Unidentifiable => "unidentifiable",
        InsufficientData(_) => "insufficient",
        ConvergenceFailure { .. } => "no convergence",
        _ => "error",
    }
    .to_string()
}

/// Per-prompt `(psi, mean T_out)` points for external plotting.
pub fn survival_points_table(points: &[(String, PromptMean)], fit: Option<&ThresholdFit>) -> ReportTable {
    let mut t = ReportTable::new(
        "Survival vs output length",
        &["benchmark", "prompt_id", "psi", "mean_tout"],
    );
    for (b, p) in points {
        t.push_row(vec![
            b.clone(),
            p.prompt_id.clone(),
            format!("{:.4}", p.psi),
            format!("{:.2}", p.mean_tout),
        ]);
    }
    if let Some(f) = fit {
        t.footnote(format!(
            "threshold fit: tau={:.3} intercept={:.2} slope_low={:.2} slope_high={:.2} rss={:.3}{}",
            f.tau_hat,
            f.intercept,
            f.slope_low,
            f.slope_high,
            f.rss,
            if f.degenerate { " (degenerate)" } else { "" }
        ));
    }
    t
}

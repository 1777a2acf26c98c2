use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use psibench_core::metrics::uniform_weights;
use psibench_core::report::{
    cells_table, cri_ci, cri_from_rows, cri_table, mixture_ratio_ci, paired_ratio_ci, provider_table,
    reconciliation_table, survival_points, CellRow, Mixture, ReportFormat, ReportTable,
};
use psibench_core::stats::{fit_threshold_model, BootstrapConfig};
use psibench_core::trial_engine::TrialRecord;

use super::{benchmarks_of, emit, models_of, parse_weights, warn, DataSource};
use crate::error::CliError;
use crate::settings::Settings;
use crate::Global;

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub source: DataSource,
    /// Compressed ratio compared against the 1.0 baseline.
    #[arg(long, default_value_t = 0.3)]
    pub ratio: f64,
    /// Restrict reconciliation tables to these models (default: all).
    #[arg(long)]
    pub model: Vec<String>,
    /// Extra mixture row, `LABEL:BENCH=W,BENCH=W`. Repeatable.
    #[arg(long)]
    pub mixture: Vec<String>,
    /// Directory receiving one CSV file per table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// File receiving every table as markdown.
    #[arg(long)]
    pub markdown: Option<PathBuf>,
    /// CSV of per-prompt (psi, mean T_out) points at --ratio, for plotting.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Bootstrap resamples for intervals; 0 disables them.
    #[arg(long)]
    pub resamples: Option<usize>,
}

fn parse_mixture(s: &str) -> Result<Mixture, CliError> {
    let (label, weights) = s
        .split_once(':')
        .ok_or_else(|| CliError::usage(format!("mixture {s:?} must look like LABEL:BENCH=W,BENCH=W")))?;
    let weights = parse_weights(weights).map_err(CliError::usage)?;
    Ok((label.to_string(), weights.into_iter().collect()))
}

fn slug(title: &str) -> String {
    let s: String = title
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    s.split('_').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("_")
}

fn reconciliation_cis(
    records: &[TrialRecord],
    model: &str,
    benchmarks: &[String],
    ratio: f64,
    mixtures: &[Mixture],
    config: BootstrapConfig,
) -> BTreeMap<String, psibench_core::stats::BootstrapCi> {
    let mut cis = BTreeMap::new();
    for b in benchmarks {
        match paired_ratio_ci(records, model, b, ratio, config) {
            Ok(ci) => {
                cis.insert(b.clone(), ci);
            }
            Err(e) => warn(format!("{model}/{b}: no interval ({e})")),
        }
    }
    let names: Vec<&str> = benchmarks.iter().map(String::as_str).collect();
    let balanced = ("Balanced weighted".to_string(), uniform_weights(names.len()));
    let extra = mixtures.iter().map(|(label, w)| {
        let names_w: Vec<f64> = names.iter().map(|n| w.get(*n).copied().unwrap_or(0.0)).collect();
        (label.clone(), names_w)
    });
    for (label, weights) in std::iter::once(balanced).chain(extra) {
        match mixture_ratio_ci(records, model, &names, &weights, ratio, config) {
            Ok(ci) => {
                cis.insert(label, ci);
            }
            Err(e) => warn(format!("{model}/{label}: no interval ({e})")),
        }
    }
    cis
}

pub fn build_tables(
    rows: &[CellRow],
    records: Option<&[TrialRecord]>,
    args: &ReportArgs,
    settings: &Settings,
) -> Result<Vec<ReportTable>, CliError> {
    let mixtures = args
        .mixture
        .iter()
        .map(|m| parse_mixture(m))
        .collect::<Result<Vec<_>, _>>()?;
    let config = settings.bootstrap(args.resamples);
    let with_ci = records.filter(|_| config.resamples > 0);
    let benchmarks = benchmarks_of(rows);
    let bench_refs: Vec<&str> = benchmarks.iter().map(String::as_str).collect();
    let models = models_of(rows);

    let mut tables = vec![cells_table(rows)];
    for model in &models {
        if !args.model.is_empty() && !args.model.contains(model) {
            continue;
        }
        let cis = match with_ci {
            Some(recs) => reconciliation_cis(recs, model, &benchmarks, args.ratio, &mixtures, config),
            None => BTreeMap::new(),
        };
        tables.push(reconciliation_table(rows, model, args.ratio, &mixtures, &cis));
    }
    tables.push(provider_table(rows, args.ratio));

    let mut reports = Vec::new();
    let mut cri_cis = BTreeMap::new();
    for model in &models {
        match cri_from_rows(rows, model, &bench_refs, args.ratio, settings.tmax, None) {
            Ok(r) => reports.push(r),
            Err(e) => {
                warn(format!("CRI for {model} skipped: {e}"));
                continue;
            }
        }
        if let Some(recs) = with_ci {
            match cri_ci(recs, model, &bench_refs, args.ratio, settings.tmax, config) {
                Ok(ci) => {
                    cri_cis.insert(model.clone(), ci);
                }
                Err(e) => warn(format!("CRI interval for {model} skipped: {e}")),
            }
        }
    }
    tables.push(cri_table(&reports, &cri_cis));
    Ok(tables)
}

fn points_table(records: &[TrialRecord], models: &[String], ratio: f64) -> (ReportTable, ReportTable) {
    let mut pts = ReportTable::new(
        "Survival points",
        &["model", "benchmark", "prompt_id", "psi", "mean_tout"],
    );
    let mut fits = ReportTable::new(
        format!("Threshold fit at r={ratio:.1}"),
        &["Model", "tau", "Intercept", "Slope below", "Slope above", "RSS"],
    );
    for model in models {
        let points = survival_points(records, model, ratio);
        for (b, p) in &points {
            pts.push_row(vec![
                model.clone(),
                b.clone(),
                p.prompt_id.clone(),
                format!("{:.4}", p.psi),
                format!("{:.2}", p.mean_tout),
            ]);
        }
        let xy: Vec<(f64, f64)> = points.iter().map(|(_, p)| (p.psi, p.mean_tout)).collect();
        match fit_threshold_model(&xy) {
            Ok(f) => fits.push_row(vec![
                model.clone(),
                format!("{:.3}{}", f.tau_hat, if f.degenerate { " (degenerate)" } else { "" }),
                format!("{:.1}", f.intercept),
                format!("{:.1}", f.slope_low),
                format!("{:.1}", f.slope_high),
                format!("{:.1}", f.rss),
            ]),
            Err(e) => warn(format!("threshold fit for {model} skipped: {e}")),
        }
    }
    (pts, fits)
}

pub fn execute(global: &Global, args: &ReportArgs) -> Result<(), CliError> {
    let settings = Settings::load(global.config.as_deref(), global.seed)?;
    let data = args.source.load(&settings.energy)?;
    let mut tables = build_tables(&data.rows, data.records.as_deref(), args, &settings)?;

    if let Some(path) = &args.points {
        let Some(records) = &data.records else {
            return Err(CliError::usage("--points needs trial record files"));
        };
        let (pts, fits) = points_table(records, &models_of(&data.rows), args.ratio);
        std::fs::write(path, pts.to_csv()).map_err(|e| CliError::from(e).context(path.display()))?;
        tables.push(fits);
    }
    if let Some(dir) = &args.csv {
        std::fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
        for t in &tables {
            let path = dir.join(format!("{}.csv", slug(&t.title)));
            std::fs::write(&path, t.to_csv()).map_err(|e| CliError::from(e).context(path.display()))?;
        }
    }
    if let Some(path) = &args.markdown {
        let md = tables
            .iter()
            .map(|t| t.render(ReportFormat::Markdown))
            .collect::<Vec<_>>()
            .join("\n");
        std::fs::write(path, md).map_err(|e| CliError::from(e).context(path.display()))?;
    }
    emit(global, &tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_and_mixtures() {
        assert_eq!(
            slug("DeepSeek output tokens at r=0.3 by benchmark"),
            "deepseek_output_tokens_at_r_0_3_by_benchmark"
        );
        let (label, w) = parse_mixture("Skewed:MBPP=0.73,HumanEval=0.27").unwrap();
        assert_eq!(label, "Skewed");
        assert_eq!(w["MBPP"], 0.73);
        assert!(parse_mixture("MBPP=1").is_err());
    }
}

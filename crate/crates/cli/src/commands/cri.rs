use std::collections::BTreeMap;

use clap::Args;
use psibench_core::report::{cri_ci, cri_from_rows, cri_table, ReportTable};

use super::{benchmarks_of, emit, models_of, parse_weight, warn, DataSource};
use crate::error::CliError;
use crate::settings::Settings;
use crate::Global;

#[derive(Args, Debug)]
pub struct CriArgs {
    #[command(flatten)]
    pub source: DataSource,
    #[arg(long, default_value_t = 0.3)]
    pub ratio: f64,
    /// Workload weights, `BENCH=W,...` summing to 1 (default: equal).
    #[arg(long, value_delimiter = ',', value_parser = parse_weight)]
    pub weights: Option<Vec<(String, f64)>>,
    /// Bootstrap resamples for intervals from records; 0 disables them.
    #[arg(long)]
    pub resamples: Option<usize>,
}

pub fn execute(global: &Global, args: &CriArgs) -> Result<(), CliError> {
    let settings = Settings::load(global.config.as_deref(), global.seed)?;
    let data = args.source.load(&settings.energy)?;
    let benchmarks = match &args.weights {
        Some(w) => w.iter().map(|(b, _)| b.clone()).collect(),
        None => benchmarks_of(&data.rows),
    };
    let bench_refs: Vec<&str> = benchmarks.iter().map(String::as_str).collect();
    let weights: Option<Vec<f64>> = args.weights.as_ref().map(|w| w.iter().map(|(_, x)| *x).collect());
    let config = settings.bootstrap(args.resamples);

    let mut reports = Vec::new();
    let mut cis = BTreeMap::new();
    let mut terms = ReportTable::new(
        format!("CRI terms at r={:.1}", args.ratio),
        &["Model", "Benchmark", "Qr/Q0", "Length factor", "Term"],
    );
    for model in models_of(&data.rows) {
        let report = match cri_from_rows(
            &data.rows,
            &model,
            &bench_refs,
            args.ratio,
            settings.tmax,
            weights.as_deref(),
        ) {
            Ok(r) => r,
            Err(e) => {
                warn(format!("CRI for {model} skipped: {e}"));
                continue;
            }
        };
        for t in &report.terms {
            terms.push_row(vec![
                model.clone(),
                t.benchmark.clone(),
                format!("{:.3}", t.quality_ratio),
                format!("{:.3}", t.length_factor),
                format!("{:.3}", t.term),
            ]);
        }
        if let (Some(recs), None, true) = (&data.records, &weights, config.resamples > 0) {
            match cri_ci(recs, &model, &bench_refs, args.ratio, settings.tmax, config) {
                Ok(ci) => {
                    cis.insert(model.clone(), ci);
                }
                Err(e) => warn(format!("CRI interval for {model} skipped: {e}")),
            }
        }
        reports.push(report);
    }
    if reports.is_empty() && !data.rows.is_empty() {
        return Err(CliError::new(
            "metrics",
            "no model has the cells and pass@1 values CRI needs",
        ));
    }
    emit(global, &[cri_table(&reports, &cis), terms])
}

use std::path::PathBuf;

use clap::Args;
use psibench_core::compression::CompressionRatio;
use psibench_core::prompt_structure::{
    tokenize, weighted_survival_with, BenchmarkProfile, RetentionRule, SegmentAnnotation, SegmentSpan, SurvivalMode,
    SurvivalResult,
};
use psibench_core::report::ReportTable;
use psibench_core::trial_engine::load_dataset;
use serde::Deserialize;

use super::{emit, resolve_profile};
use crate::error::CliError;
use crate::Global;

#[derive(Args, Debug)]
pub struct PsiArgs {
    /// Profile file or bundled name (mbpp, humaneval, gsm8k). Repeatable.
    #[arg(long)]
    pub profile: Vec<String>,
    /// Segment annotation TOML (length or text, survival_mode, retention, spans). Repeatable.
    #[arg(long)]
    pub annotation: Vec<PathBuf>,
    /// Prompt dataset (JSONL); scored per prompt against the single --profile.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.7,0.5,0.3")]
    pub ratios: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    length: Option<usize>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    survival_mode: SurvivalMode,
    #[serde(default)]
    retention: RetentionRule,
    spans: Vec<SegmentSpan>,
}

fn segments(result: &SurvivalResult) -> String {
    result
        .per_segment
        .iter()
        .map(|(label, psi)| format!("{label}={psi:.2}"))
        .collect::<Vec<_>>()
        .join("; ")
}

fn profile_rows(
    t: &mut ReportTable,
    input: &str,
    profile: &BenchmarkProfile,
    n: usize,
    ratios: &[f64],
) -> Result<(), CliError> {
    for &r in ratios {
        let psi = profile
            .survival_for_length(n, r)
            .map_err(|e| CliError::from(e).context(input))?;
        let segs = if profile.template_spans.is_empty() {
            "-".to_string()
        } else {
            segments(&profile.template_survival(n, r)?)
        };
        t.push_row(vec![input.to_string(), format!("{r:.2}"), format!("{psi:.4}"), segs]);
    }
    Ok(())
}

pub fn execute(global: &Global, args: &PsiArgs) -> Result<(), CliError> {
    let ratios: Vec<f64> = args.ratios.clone();
    for &r in &ratios {
        CompressionRatio::new(r)?;
    }
    if args.profile.is_empty() && args.annotation.is_empty() {
        return Err(CliError::usage("give at least one --profile or --annotation"));
    }
    let mut t = ReportTable::new("Instruction survival", &["Input", "r", "Psi", "Segments"]);

    if let Some(path) = &args.prompts {
        let [spec] = args.profile.as_slice() else {
            return Err(CliError::usage("--prompts needs exactly one --profile"));
        };
        let profile = resolve_profile(spec)?;
        for p in load_dataset(path)? {
            let n = tokenize(&p.text)?.len();
            profile_rows(&mut t, &p.prompt_id, &profile, n, &ratios)?;
        }
    } else {
        for spec in &args.profile {
            let profile = resolve_profile(spec)?;
            if profile.template_spans.is_empty() {
                for &r in &ratios {
                    let psi = profile.survival(r).map_err(|e| CliError::from(e).context(spec))?;
                    t.push_row(vec![
                        profile.name.clone(),
                        format!("{r:.2}"),
                        format!("{psi:.4}"),
                        "-".into(),
                    ]);
                }
            } else {
                profile_rows(&mut t, &profile.name, &profile, profile.typical_length(), &ratios)?;
            }
        }
    }

    for path in &args.annotation {
        let ctx = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(&ctx))?;
        let file: AnnotationFile = toml::from_str(&text).map_err(|e| CliError::from(e).context(&ctx))?;
        let n = match (file.length, &file.text) {
            (Some(n), _) => n,
            (None, Some(text)) => tokenize(text)?.len(),
            (None, None) => return Err(CliError::new("config", "annotation needs `length` or `text`").context(&ctx)),
        };
        let annotation = SegmentAnnotation::new(file.spans, n).map_err(|e| CliError::from(e).context(&ctx))?;
        let name = file.name.unwrap_or(ctx);
        for &r in &ratios {
            let res = weighted_survival_with(&annotation, r, file.survival_mode, file.retention)?;
            t.push_row(vec![
                name.clone(),
                format!("{r:.2}"),
                format!("{:.4}", res.weighted),
                segments(&res),
            ]);
        }
    }
    emit(global, &[t])
}

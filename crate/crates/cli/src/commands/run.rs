use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use psibench_core::backends::{build_backend, Backend, RecordingBackend};
use psibench_core::trial_engine::{
    build_plan_from_config, read_log, run_to_log, verify_determinism, BackendSet, PlanConfig, RunOptions,
};

use crate::error::CliError;
use crate::Global;

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Stop after this many pending trials (the run can be resumed later).
    #[arg(long)]
    pub max_trials: Option<usize>,
    /// Worker threads (default: sum of backend concurrency limits).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Omit timestamps from records.
    #[arg(long)]
    pub no_timestamps: bool,
    /// Append every exchange to DIR/<model>.jsonl, replayable with a
    /// `replay` backend.
    #[arg(long, value_name = "DIR")]
    pub record: Option<PathBuf>,
}

pub fn execute(global: &Global, args: &RunArgs) -> Result<(), CliError> {
    let config_path = global
        .config
        .as_deref()
        .ok_or_else(|| CliError::usage("run needs --config PLAN.toml"))?;
    let out = global
        .out
        .as_deref()
        .ok_or_else(|| CliError::usage("run needs --out RECORDS.jsonl"))?;
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::new("config", e.to_string()).context(config_path.display()))?;
    let mut config = PlanConfig::from_toml_str(&text).map_err(|e| CliError::from(e).context(config_path.display()))?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    let base = config_path.parent().unwrap_or(std::path::Path::new("."));
    let plan = build_plan_from_config(&config, base)?;
    let backends = match &args.record {
        None => BackendSet::from_plan(&plan)?,
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
            let mut set = BackendSet::new();
            for m in &plan.models {
                let archive = dir.join(format!("{}.jsonl", archive_name(&m.name)));
                let inner = build_backend(&m.backend, &plan.base_dir)?;
                let recorder =
                    RecordingBackend::new(inner, &archive).map_err(|e| CliError::from(e).context(archive.display()))?;
                set.insert(&m.name, Arc::new(recorder) as Arc<dyn Backend>);
            }
            set
        }
    };
    eprintln!(
        "plan: {} models x {} benchmarks x {} ratios x {} prompts x {} replicates = {} calls",
        plan.models.len(),
        plan.benchmarks.len(),
        plan.sweep.len(),
        plan.prompts_per_cell,
        plan.replicates,
        plan.total_calls()
    );
    let options = RunOptions {
        max_trials: args.max_trials,
        workers: args.workers,
        timestamps: !args.no_timestamps,
    };
    let summary = run_to_log(&plan, &backends, out, &options).map_err(|e| CliError::from(e).context(out.display()))?;
    let log = read_log(out)?;
    let determinism = verify_determinism(&log.records);
    println!(
        "planned={} skipped={} attempted={} records={} errors={} remaining={} malformed_lines={} nondeterministic_groups={}",
        summary.planned,
        summary.skipped_existing,
        summary.attempted,
        summary.records,
        summary.errors,
        summary.remaining(),
        summary.malformed_lines,
        determinism.mismatches.len()
    );
    Ok(())
}

fn archive_name(model: &str) -> String {
    model
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

//! Experiment plans, execution and persisted trial records.

mod plan;
mod record;
mod runner;

pub use plan::{
    build_plan, build_plan_from_config, load_dataset, sample_prompts, BenchmarkConfig, BenchmarkData, DatasetPrompt,
    ExperimentPlan, GradeEntry, ModelConfig, PlanConfig, PlanError,
};
pub use record::{
    parse_log, read_log, verify_determinism, CellKey, DeterminismReport, LineError, LogContents, LogEntry,
    MismatchGroup, RecordLog, TrialErrorEntry, TrialKey, TrialRecord,
};
pub use runner::{planned_keys, run, run_to_log, run_with_sink, BackendSet, RunOptions, RunSummary};

//! Concurrent, resumable plan execution.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use crate::backends::{build_backend, Backend, BackendError, CompletionRequest, ConcurrencyLimiter, RequestHints};
use crate::compression::compress_first_n;
use crate::prompt_structure::tokenize;

use super::plan::{BenchmarkData, DatasetPrompt, ExperimentPlan};
use super::record::{read_log, CellKey, LogEntry, RecordLog, TrialErrorEntry, TrialKey, TrialRecord};

struct Slot {
    backend: Arc<dyn Backend>,
    limiter: ConcurrencyLimiter,
}

/// Backends keyed by model name, each behind its own concurrency limit.
pub struct BackendSet {
    slots: BTreeMap<String, Slot>,
}

impl BackendSet {
    pub fn new() -> Self {
        Self { slots: BTreeMap::new() }
    }

    pub fn insert(&mut self, model: impl Into<String>, backend: Arc<dyn Backend>) {
        let limiter = ConcurrencyLimiter::new(backend.max_parallel());
        self.slots.insert(model.into(), Slot { backend, limiter });
    }

    /// Builds every model's configured backend.
    pub fn from_plan(plan: &ExperimentPlan) -> Result<Self, BackendError> {
        let mut set = Self::new();
        for m in &plan.models {
            set.insert(&m.name, build_backend(&m.backend, &plan.base_dir)?);
        }
        Ok(set)
    }

    fn total_parallel(&self) -> usize {
        self.slots.values().map(|s| s.limiter.max()).sum()
    }
}

impl Default for BackendSet {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Stop after attempting this many pending trials.
    pub max_trials: Option<usize>,
    /// Worker threads; defaults to the sum of backend limits, capped at 64.
    pub workers: Option<usize>,
    pub timestamps: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_trials: None,
            workers: None,
            timestamps: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub planned: usize,
    pub skipped_existing: usize,
    pub attempted: usize,
    pub records: usize,
    pub errors: usize,
    pub malformed_lines: usize,
}

impl RunSummary {
    pub fn remaining(&self) -> usize {
        self.planned - self.skipped_existing - self.records
    }
}

struct Job<'a> {
    cell: CellKey,
    benchmark: &'a BenchmarkData,
    prompt: &'a DatasetPrompt,
    ratio: f64,
    replicate: u32,
}

impl Job<'_> {
    fn key(&self) -> TrialKey {
        TrialKey {
            cell: self.cell.clone(),
            prompt_id: self.prompt.prompt_id.clone(),
            replicate_index: self.replicate,
        }
    }
}

/// Every planned trial, in plan order.
pub fn planned_keys(plan: &ExperimentPlan) -> Vec<TrialKey> {
    jobs(plan).iter().map(Job::key).collect()
}

fn jobs(plan: &ExperimentPlan) -> Vec<Job<'_>> {
    let mut out = Vec::with_capacity(plan.total_calls());
    for m in &plan.models {
        for b in &plan.benchmarks {
            for r in plan.sweep.ratios() {
                let cell = CellKey::new(&m.name, b.name(), r.value());
                for p in &b.prompts {
                    for rep in 0..plan.replicates {
                        out.push(Job {
                            cell: cell.clone(),
                            benchmark: b,
                            prompt: p,
                            ratio: r.value(),
                            replicate: rep,
                        });
                    }
                }
            }
        }
    }
    out
}

fn now(enabled: bool) -> Option<String> {
    enabled.then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true))
}

fn execute(plan: &ExperimentPlan, backends: &BackendSet, job: &Job<'_>, timestamps: bool) -> LogEntry {
    let fail = |kind: &str, message: String| {
        LogEntry::Error(TrialErrorEntry {
            model: job.cell.model.clone(),
            benchmark: job.cell.benchmark.clone(),
            ratio: job.ratio,
            prompt_id: job.prompt.prompt_id.clone(),
            replicate_index: job.replicate,
            error_kind: kind.to_string(),
            message,
            timestamp: now(timestamps),
        })
    };
    let Some(slot) = backends.slots.get(&job.cell.model) else {
        return fail("config", format!("no backend for model {:?}", job.cell.model));
    };
    let prepared = tokenize(&job.prompt.text).and_then(|p| {
        let ratio = crate::compression::CompressionRatio::new(job.ratio)?;
        let psi = job.benchmark.profile.survival_for_length(p.len(), job.ratio)?;
        Ok((compress_first_n(&p, ratio), psi))
    });
    let (compressed, psi) = match prepared {
        Ok(v) => v,
        Err(e) => return fail("prompt", e.to_string()),
    };
    let request = CompletionRequest {
        model_name: job.cell.model.clone(),
        prompt_text: compressed.text(),
        system_prompt: plan.system_prompt.clone(),
        temperature: plan.temperature,
        max_tokens: plan.max_tokens,
        hints: RequestHints {
            psi: Some(psi),
            replicate: job.replicate,
        },
    };
    let response = {
        let _permit = slot.limiter.acquire();
        slot.backend.complete(&request)
    };
    match response {
        Ok(resp) => {
            let hit = resp.hit_ceiling || resp.output_tokens >= plan.max_tokens;
            let pass1 = plan.grade(&job.cell, &job.prompt.prompt_id).or(if job.ratio == 1.0 {
                job.prompt.pass1_baseline
            } else {
                None
            });
            LogEntry::Record(TrialRecord {
                model: job.cell.model.clone(),
                benchmark: job.cell.benchmark.clone(),
                ratio: job.ratio,
                prompt_id: job.prompt.prompt_id.clone(),
                replicate_index: job.replicate,
                input_tokens: compressed.len() as u32,
                output_tokens: if hit { plan.max_tokens } else { resp.output_tokens },
                hit_ceiling: hit,
                pass1,
                psi,
                token_source: resp.token_source,
                timestamp: now(timestamps),
            })
        }
        Err(e) => fail(e.kind(), e.to_string()),
    }
}

/// Runs every trial not in `done`, handing each outcome to `sink` on the
/// calling thread in completion order.
pub fn run_with_sink<F>(
    plan: &ExperimentPlan,
    backends: &BackendSet,
    done: &HashSet<TrialKey>,
    options: &RunOptions,
    mut sink: F,
) -> std::io::Result<RunSummary>
where
    F: FnMut(LogEntry) -> std::io::Result<()>,
{
    let all = jobs(plan);
    let planned = all.len();
    let mut pending: Vec<Job<'_>> = all.into_iter().filter(|j| !done.contains(&j.key())).collect();
    let skipped_existing = planned - pending.len();
    if let Some(limit) = options.max_trials {
        pending.truncate(limit);
    }
    let workers = options
        .workers
        .unwrap_or_else(|| backends.total_parallel().min(64))
        .clamp(1, pending.len().max(1));

    let mut summary = RunSummary {
        planned,
        skipped_existing,
        attempted: pending.len(),
        ..Default::default()
    };
    let cursor = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<LogEntry>();
    let pending = &pending;
    let cursor = &cursor;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            scope.spawn(move || loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                let Some(job) = pending.get(i) else { break };
                if tx.send(execute(plan, backends, job, options.timestamps)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for entry in rx {
            match &entry {
                LogEntry::Record(_) => summary.records += 1,
                LogEntry::Error(_) => summary.errors += 1,
            }
            if let Err(e) = sink(entry) {
                // Stop handing out work; in-flight trials finish and are dropped.
                cursor.store(usize::MAX / 2, Ordering::Relaxed);
                return Err(e);
            }
        }
        Ok(())
    })?;
    Ok(summary)
}

/// Runs into an append-only JSONL log, skipping trials it already holds a
/// record for. Errored trials are retried.
pub fn run_to_log(
    plan: &ExperimentPlan,
    backends: &BackendSet,
    log_path: &Path,
    options: &RunOptions,
) -> std::io::Result<RunSummary> {
    let (done, malformed) = if log_path.exists() {
        let existing = read_log(log_path)?;
        let planned: HashSet<TrialKey> = planned_keys(plan).into_iter().collect();
        let done = existing
            .records
            .iter()
            .map(TrialRecord::key)
            .filter(|k| planned.contains(k))
            .collect();
        (done, existing.malformed.len())
    } else {
        (HashSet::new(), 0)
    };
    let mut log = RecordLog::open(log_path)?;
    let mut summary = run_with_sink(plan, backends, &done, options, |e| log.append(&e))?;
    summary.malformed_lines = malformed;
    Ok(summary)
}

/// Runs the whole plan and returns entries in completion order.
pub fn run(plan: &ExperimentPlan, backends: &BackendSet, options: &RunOptions) -> (Vec<LogEntry>, RunSummary) {
    let mut out = Vec::new();
    let summary = run_with_sink(plan, backends, &HashSet::new(), options, |e| {
        out.push(e);
        Ok(())
    })
    .expect("in-memory sink cannot fail");
    (out, summary)
}

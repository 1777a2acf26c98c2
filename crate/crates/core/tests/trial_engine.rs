mod common;

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use psibench_core::backends::{
    Backend, BackendConfig, CompletionRequest, CompletionResponse, ReplayArchive, ReplayBackend, TokenSource,
};
use psibench_core::compression::{compress_first_n, CompressionRatio};
use psibench_core::prompt_structure::{retained_count, tokenize};
use psibench_core::trial_engine::{
    build_plan, read_log, run, run_to_log, verify_determinism, BackendSet, LogEntry, PlanError, RunOptions, TrialRecord,
};

fn records(entries: Vec<LogEntry>) -> Vec<TrialRecord> {
    entries
        .into_iter()
        .filter_map(|e| match e {
            LogEntry::Record(r) => Some(r),
            LogEntry::Error(_) => None,
        })
        .collect()
}

fn canonical(mut recs: Vec<TrialRecord>) -> Vec<String> {
    let mut out: Vec<String> = recs
        .iter_mut()
        .map(|r| {
            r.timestamp = None;
            serde_json::to_string(r).unwrap()
        })
        .collect();
    out.sort();
    out
}

#[test]
fn full_design_totals_5400_calls() {
    let dir = tempfile::tempdir().unwrap();
    for b in ["mbpp", "humaneval", "gsm8k"] {
        let ds: Vec<_> = common::mbpp_dataset(60)
            .into_iter()
            .map(|mut p| {
                p.prompt_id = format!("{b}-{}", p.prompt_id);
                p
            })
            .collect();
        common::write_jsonl(&dir.path().join(format!("{b}.jsonl")), &ds);
    }
    let mut plan = String::from("seed = 3\n");
    for m in ["a", "b", "c"] {
        plan += &format!("[[models]]\nname = \"{m}\"\nbackend = {{ kind = \"replay\", archive = \"none.jsonl\" }}\n");
    }
    for b in ["mbpp", "humaneval", "gsm8k"] {
        plan += &format!("[[benchmarks]]\nprofile = \"builtin:{b}\"\nprompts = \"{b}.jsonl\"\n");
    }
    let path = dir.path().join("plan.toml");
    std::fs::write(&path, plan).unwrap();
    let p = build_plan(&path).unwrap();
    assert_eq!(p.total_calls(), 5400);
    assert_eq!(p.cells().len(), 36);
    let again = build_plan(&path).unwrap();
    assert_eq!(p.benchmarks, again.benchmarks);
}

#[test]
fn trivial_plan_and_plan_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = common::synthetic_plan(dir.path(), 5, 1, 1, "[1.0]", 0.0, "");
    let plan = build_plan(&path).unwrap();
    assert_eq!(plan.total_calls(), 1);

    let path = common::synthetic_plan(dir.path(), 5, 6, 1, "[1.0]", 0.0, "");
    assert!(matches!(
        build_plan(&path),
        Err(PlanError::InsufficientPrompts {
            requested: 6,
            available: 5,
            ..
        })
    ));

    std::fs::remove_file(dir.path().join("mbpp.jsonl")).unwrap();
    let path = common::synthetic_plan_path_only(dir.path());
    assert!(matches!(build_plan(&path), Err(PlanError::Config(_))));
    assert!(matches!(
        build_plan(&dir.path().join("absent.toml")),
        Err(PlanError::Config(_))
    ));
}

#[test]
fn compressed_mbpp_prompt_has_nine_input_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let path = common::synthetic_plan(dir.path(), 4, 4, 1, "[1.0, 0.3]", 0.0, "");
    let plan = build_plan(&path).unwrap();
    let backends = BackendSet::from_plan(&plan).unwrap();
    let (entries, summary) = run(&plan, &backends, &RunOptions::default());
    assert_eq!(summary.records, 8);
    for r in records(entries) {
        assert_eq!(r.input_tokens as usize, retained_count(30, r.ratio).unwrap());
        if r.ratio == 0.3 {
            assert_eq!(r.input_tokens, 9);
            assert_eq!(r.psi, 0.15);
            assert_eq!(r.pass1, None);
        } else {
            assert_eq!(r.psi, 1.0);
            assert!(r.pass1.is_some());
        }
        assert!(r.timestamp.is_some());
        assert_eq!(r.token_source, TokenSource::Simulated);
        assert!(!r.hit_ceiling || r.output_tokens == plan.max_tokens);
    }
}

#[test]
fn interrupted_then_resumed_run_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let path = common::synthetic_plan(dir.path(), 6, 5, 3, "[1.0, 0.5, 0.3]", 0.3, ", vary_replicates = true");
    let plan = build_plan(&path).unwrap();
    let backends = BackendSet::from_plan(&plan).unwrap();

    let full = dir.path().join("full.jsonl");
    let s = run_to_log(&plan, &backends, &full, &RunOptions::default()).unwrap();
    assert_eq!(s.records, plan.total_calls());

    let partial = dir.path().join("partial.jsonl");
    let first = run_to_log(
        &plan,
        &backends,
        &partial,
        &RunOptions {
            max_trials: Some(17),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(first.records, 17);
    // A crash mid-write leaves a torn line behind.
    std::fs::OpenOptions::new()
        .append(true)
        .open(&partial)
        .unwrap()
        .write_all(br#"{"kind":"record","model":"sim","bench"#)
        .unwrap();
    let second = run_to_log(&plan, &backends, &partial, &RunOptions::default()).unwrap();
    assert_eq!(second.skipped_existing, 17);
    assert_eq!(second.malformed_lines, 1);
    assert_eq!(second.records, plan.total_calls() - 17);
    let third = run_to_log(&plan, &backends, &partial, &RunOptions::default()).unwrap();
    assert_eq!(third.attempted, 0);

    let a = read_log(&full).unwrap();
    let b = read_log(&partial).unwrap();
    assert_eq!(b.malformed.len(), 1);
    assert_eq!(canonical(a.records), canonical(b.records));
}

struct Flaky;

impl Backend for Flaky {
    fn complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, psibench_core::backends::BackendError> {
        if request.hints.replicate == 1 {
            return Err(psibench_core::backends::BackendError::Transient("HTTP 503".into()));
        }
        Ok(CompletionResponse {
            output_text: "ok".into(),
            output_tokens: 1,
            hit_ceiling: false,
            latency_ms: None,
            token_source: TokenSource::Reported,
        })
    }

    fn max_parallel(&self) -> usize {
        3
    }
}

#[test]
fn errors_are_recorded_and_retried_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let path = common::synthetic_plan(dir.path(), 4, 4, 2, "[1.0, 0.3]", 0.0, "");
    let plan = build_plan(&path).unwrap();
    let mut flaky = BackendSet::new();
    flaky.insert("sim", Arc::new(Flaky) as Arc<dyn Backend>);
    let log = dir.path().join("run.jsonl");
    let s = run_to_log(&plan, &flaky, &log, &RunOptions::default()).unwrap();
    assert_eq!(s.records + s.errors, plan.total_calls());
    assert_eq!(s.errors, 8);
    let contents = read_log(&log).unwrap();
    assert_eq!(contents.errors.len(), 8);
    assert!(contents
        .errors
        .iter()
        .all(|e| e.error_kind == "transient" && e.replicate_index == 1));

    let healthy = BackendSet::from_plan(&plan).unwrap();
    let s2 = run_to_log(&plan, &healthy, &log, &RunOptions::default()).unwrap();
    assert_eq!((s2.skipped_existing, s2.records, s2.errors), (8, 8, 0));
    let keys: HashSet<_> = read_log(&log).unwrap().records.iter().map(TrialRecord::key).collect();
    assert_eq!(keys.len(), plan.total_calls());
}

#[test]
fn replay_archive_of_twelve_responses() {
    let dir = tempfile::tempdir().unwrap();
    let path = common::synthetic_plan(dir.path(), 3, 3, 1, "[1.0, 0.7, 0.5, 0.3]", 0.0, "");
    let plan = build_plan(&path).unwrap();
    let mut entries = Vec::new();
    let mut expected = Vec::new();
    for (i, (p, r)) in plan.benchmarks[0]
        .prompts
        .iter()
        .flat_map(|p| plan.sweep.ratios().iter().map(move |r| (p, *r)))
        .enumerate()
    {
        let text = compress_first_n(&tokenize(&p.text).unwrap(), CompressionRatio::new(r.value()).unwrap()).text();
        let mut req = CompletionRequest::new("sim", text);
        req.max_tokens = plan.max_tokens;
        let tokens = 100 + i as u32;
        entries.push((
            req,
            CompletionResponse {
                output_text: String::new(),
                output_tokens: tokens,
                hit_ceiling: false,
                latency_ms: None,
                token_source: TokenSource::Reported,
            },
        ));
        expected.push((p.prompt_id.clone(), r.value(), tokens));
    }
    assert_eq!(entries.len(), 12);
    let mut set = BackendSet::new();
    set.insert(
        "sim",
        Arc::new(ReplayBackend::new(ReplayArchive::from_entries(entries), 2)) as Arc<dyn Backend>,
    );
    let (out, summary) = run(&plan, &set, &RunOptions::default());
    assert_eq!((summary.records, summary.errors), (12, 0));
    let mut got: Vec<_> = records(out)
        .into_iter()
        .map(|r| (r.prompt_id, r.ratio, r.output_tokens))
        .collect();
    got.sort_by(|a, b| a.partial_cmp(b).unwrap());
    expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(got, expected);
}

#[test]
fn replay_miss_is_a_per_trial_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = common::synthetic_plan(dir.path(), 2, 2, 1, "[1.0]", 0.0, "");
    let plan = build_plan(&path).unwrap();
    let mut set = BackendSet::new();
    set.insert(
        "sim",
        Arc::new(ReplayBackend::new(ReplayArchive::from_entries([]), 1)) as Arc<dyn Backend>,
    );
    let (out, summary) = run(&plan, &set, &RunOptions::default());
    assert_eq!((summary.records, summary.errors), (0, 2));
    assert!(out
        .iter()
        .all(|e| matches!(e, LogEntry::Error(x) if x.error_kind == "replay_miss")));
}

#[test]
fn determinism_reports() {
    let dir = tempfile::tempdir().unwrap();
    let path = common::synthetic_plan(dir.path(), 5, 5, 3, "[1.0, 0.3]", 0.4, "");
    let plan = build_plan(&path).unwrap();
    let (out, _) = run(&plan, &BackendSet::from_plan(&plan).unwrap(), &RunOptions::default());
    let mut recs = records(out);
    assert!(verify_determinism(&recs).is_deterministic());

    let target = recs
        .iter()
        .position(|r| r.ratio == 0.3 && r.replicate_index == 2)
        .unwrap();
    recs[target].output_tokens += 1;
    let report = verify_determinism(&recs);
    assert_eq!(report.mismatches.len(), 1);
    assert_eq!(report.mismatches[0].prompt_id, recs[target].prompt_id);
    assert_eq!(report.mismatches[0].cell, recs[target].cell());

    let path = common::synthetic_plan(dir.path(), 5, 5, 3, "[1.0, 0.3]", 0.4, ", vary_replicates = true");
    let plan = build_plan(&path).unwrap();
    assert!(matches!(plan.models[0].backend, BackendConfig::Synthetic(ref c) if c.vary_replicates));
    let (out, _) = run(&plan, &BackendSet::from_plan(&plan).unwrap(), &RunOptions::default());
    assert!(!verify_determinism(&records(out)).is_deterministic());
}

#[test]
fn bare_record_lines_are_accepted() {
    let line = r#"{"model":"m","benchmark":"b","ratio":0.3,"prompt_id":"p","replicate_index":0,"input_tokens":9,"output_tokens":1024,"hit_ceiling":true,"pass1":null,"psi":0.15}"#;
    let parsed = psibench_core::trial_engine::parse_log(format!("{line}\nnot json\n").as_bytes()).unwrap();
    assert_eq!(parsed.records.len(), 1);
    assert_eq!(parsed.malformed[0].line, 2);
}

#![allow(dead_code)]

use std::path::Path;

use psibench_core::trial_engine::DatasetPrompt;

pub const MBPP_PROMPT: &str = "Write a Python function to solve this task. Only provide the code. \
     Task: Write a function that returns the sum of the squares of the first n odd numbers. Code:";

/// `n` distinct 30-word MBPP-shaped prompts.
pub fn mbpp_dataset(n: usize) -> Vec<DatasetPrompt> {
    (0..n)
        .map(|i| {
            let text = MBPP_PROMPT.replace("to solve", &format!("to solve#{i}"));
            assert_eq!(text.split_whitespace().count(), 30);
            DatasetPrompt {
                prompt_id: format!("mbpp-{i:03}"),
                text,
                pass1_baseline: Some(i % 2 == 0),
            }
        })
        .collect()
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) {
    let body: String = items.iter().map(|i| serde_json::to_string(i).unwrap() + "\n").collect();
    std::fs::write(path, body).unwrap();
}

/// Writes a one-model MBPP plan with a synthetic backend into `dir`.
pub fn synthetic_plan(
    dir: &Path,
    prompts: usize,
    per_cell: usize,
    replicates: u32,
    ratios: &str,
    dispersion: f64,
    extra: &str,
) -> std::path::PathBuf {
    write_jsonl(&dir.join("mbpp.jsonl"), &mbpp_dataset(prompts));
    let plan = format!(
        r#"
seed = 11
prompts_per_cell = {per_cell}
replicates = {replicates}
ratios = {ratios}

[[models]]
name = "sim"
backend = {{ kind = "synthetic", seed = 5, params = {{ t0 = 18, alpha = 379, tau = 0.35, tmax = 1024, beta = 0.74, dispersion = {dispersion} }} {extra} }}

[[benchmarks]]
profile = "builtin:mbpp"
prompts = "mbpp.jsonl"
"#
    );
    let path = dir.join("plan.toml");
    std::fs::write(&path, plan).unwrap();
    path
}

/// Rewrites the standard plan without touching the dataset.
pub fn synthetic_plan_path_only(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("plan.toml");
    assert!(path.exists());
    path
}

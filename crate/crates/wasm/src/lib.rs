//! Browser bindings. Every export takes plain values and returns a JSON
//! string; the `*_json` functions hold the logic so they can be tested
//! natively.

use psibench_core::backends::{simulate_grid, summarize_grid, VerboseCompensationParams};
use psibench_core::compression::{compress_first_n, CompressionRatio};
use psibench_core::prompt_structure::{builtin, tokenize};
use psibench_core::report::{cri_from_rows, interpret_cri, reference_cells};
use psibench_core::stats::fit_threshold_model;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const REFERENCE_TMAX: f64 = 1024.0;

fn to_js(result: Result<Value, String>) -> Result<String, JsValue> {
    result.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

/// Ψ at `steps + 1` evenly spaced ratios for a bundled profile, plus the
/// first-N-words compression of `text` at `ratio` when `text` is non-empty.
pub fn survival_json(profile: &str, steps: u32, text: &str, ratio: f64) -> Result<Value, String> {
    let profile = builtin::get(profile).ok_or_else(|| format!("unknown profile {profile:?}"))?;
    let steps = steps.clamp(1, 1000);
    let n = profile.typical_length();
    let curve = (0..=steps)
        .map(|i| {
            let r = (f64::from(i) / f64::from(steps)).max(0.01);
            profile.survival_for_length(n, r).map(|psi| json!([r, psi]))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let compressed = if text.trim().is_empty() {
        Value::Null
    } else {
        let prompt = tokenize(text).map_err(|e| e.to_string())?;
        let r = CompressionRatio::new(ratio).map_err(|e| e.to_string())?;
        let out = compress_first_n(&prompt, r);
        let psi = profile
            .survival_for_length(prompt.len(), ratio)
            .map_err(|e| e.to_string())?;
        json!({ "text": out.text(), "kept": out.len(), "total": prompt.len(), "psi": psi })
    };
    Ok(json!({ "profile": profile.name, "tokens": n, "curve": curve, "compressed": compressed }))
}

/// Simulates `trials` draws at `points` evenly spaced Ψ values and fits the
/// hinge model to the per-point means.
pub fn simulate_json(params: &str, points: u32, trials: u32, seed: u64) -> Result<Value, String> {
    let params: VerboseCompensationParams = serde_json::from_str(params).map_err(|e| e.to_string())?;
    let points = points.clamp(3, 200);
    let grid: Vec<f64> = (1..=points).map(|i| f64::from(i) / f64::from(points + 1)).collect();
    let draws = simulate_grid(&params, &grid, trials.clamp(1, 20_000), seed).map_err(|e| e.to_string())?;
    let summary = summarize_grid(&draws);
    let means: Vec<(f64, f64)> = summary.iter().map(|s| (s.psi, s.mean_tout)).collect();
    let fit = fit_threshold_model(&means).ok();
    let expected: Vec<Value> = grid.iter().map(|&p| json!([p, params.expected_length(p)])).collect();
    Ok(json!({ "summary": summary, "expected": expected, "fit": fit }))
}

/// CRI for every reference model at `ratio`. `weights` maps benchmark names
/// to weights summing to 1; an empty object means equal weights.
pub fn cri_json(ratio: f64, weights: &str) -> Result<Value, String> {
    let rows = reference_cells();
    let weights: Vec<(String, f64)> = if weights.trim().is_empty() {
        Vec::new()
    } else {
        let map: serde_json::Map<String, Value> = serde_json::from_str(weights).map_err(|e| e.to_string())?;
        map.into_iter()
            .map(|(k, v)| {
                v.as_f64()
                    .map(|w| (k.clone(), w))
                    .ok_or_else(|| format!("weight for {k} is not a number"))
            })
            .collect::<Result<_, _>>()?
    };
    let mut models: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    models.dedup();
    let (benchmarks, w): (Vec<&str>, Option<Vec<f64>>) = if weights.is_empty() {
        let mut b: Vec<&str> = rows.iter().map(|r| r.benchmark.as_str()).collect();
        b.sort_unstable();
        b.dedup();
        (b, None)
    } else {
        (
            weights.iter().map(|(b, _)| b.as_str()).collect(),
            Some(weights.iter().map(|(_, w)| *w).collect()),
        )
    };
    let mut out = Vec::new();
    for model in models {
        let report =
            cri_from_rows(&rows, model, &benchmarks, ratio, REFERENCE_TMAX, w.as_deref()).map_err(|e| e.to_string())?;
        out.push(json!({ "label": interpret_cri(report.cri), "report": report }));
    }
    Ok(Value::Array(out))
}

#[wasm_bindgen]
pub fn survival(profile: &str, steps: u32, text: &str, ratio: f64) -> Result<String, JsValue> {
    to_js(survival_json(profile, steps, text, ratio))
}

#[wasm_bindgen]
pub fn simulate(params: &str, points: u32, trials: u32, seed: u64) -> Result<String, JsValue> {
    to_js(simulate_json(params, points, trials, seed))
}

#[wasm_bindgen]
pub fn cri(ratio: f64, weights: &str) -> Result<String, JsValue> {
    to_js(cri_json(ratio, weights))
}

//! Acceptance criteria, one status line each.

mod common;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use psibench_core::backends::{
    Backend, CompletionRequest, RecordingBackend, ReplayBackend, ReplayConfig, SyntheticBackend, SyntheticConfig,
    VerboseCompensationParams,
};
use psibench_core::metrics::{energy, explosion_ratio, uniform_weights, weighted_mixture};
use psibench_core::prompt_structure::builtin;
use psibench_core::report::{cri_from_rows, find, reference_cells};
use psibench_core::stats::{bootstrap_bca, fit_threshold_model, tobit_fit, truncated_mean, welch_t, BootstrapConfig};
use psibench_core::trial_engine::{
    build_plan, read_log, run, run_to_log, verify_determinism, BackendSet, LogEntry, RunOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64, o: Outcome) -> Outcome {
    let secs = elapsed.as_secs_f64();
    match o {
        Ok(d) if secs < limit_s => Ok(format!("{d}; {secs:.2}s")),
        Ok(d) => Err(format!("{d}; took {secs:.2}s, limit {limit_s}s")),
        Err(d) => Err(format!("{d}; {secs:.2}s")),
    }
}

fn c1_cri() -> Outcome {
    let start = Instant::now();
    let rows = reference_cells();
    let benchmarks = ["MBPP", "HumanEval", "GSM8K"];
    let expected = [("GPT-4o-mini", 0.848), ("Mistral-Large", 0.424), ("DeepSeek", 0.090)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (model, want) in expected {
        let got = cri_from_rows(&rows, model, &benchmarks, 0.3, 1024.0, None)
            .map_err(|e| e.to_string())?
            .cri;
        ok &= (got - want).abs() <= 0.001;
        parts.push(format!("{model} {got:.4}"));
    }
    within(start.elapsed(), 1.0, check(ok, parts.join(", ")))
}

fn c2_survival() -> Outcome {
    let get = |n: &str| builtin::get(n).ok_or(format!("missing profile {n}"));
    let mbpp = get("mbpp")?.survival(0.3).map_err(|e| e.to_string())?;
    let he = get("humaneval")?.survival(0.3).map_err(|e| e.to_string())?;
    let gsm = get("gsm8k")?.survival(0.3).map_err(|e| e.to_string())?;
    check(
        mbpp == 0.15 && he == 0.72 && gsm == 0.41,
        format!("MBPP {mbpp}, HumanEval {he}, GSM8K {gsm}"),
    )
}

fn c3_reconciliation() -> Outcome {
    let rows = reference_cells();
    let cell = |b: &str, r: f64| find(&rows, "DeepSeek", b, r).map(|c| c.mean_tout).ok_or("missing cell");
    let b = ["MBPP", "HumanEval", "GSM8K"];
    let base: Vec<f64> = b.iter().map(|x| cell(x, 1.0)).collect::<Result<_, _>>()?;
    let comp: Vec<f64> = b.iter().map(|x| cell(x, 0.3)).collect::<Result<_, _>>()?;
    let w = uniform_weights(3);
    let m0 = weighted_mixture(&base, &w).map_err(|e| e.to_string())?;
    let mr = weighted_mixture(&comp, &w).map_err(|e| e.to_string())?;
    let ratio = explosion_ratio(m0, mr).map_err(|e| e.to_string())?;
    check(
        (m0 - 34.3).abs() <= 0.1 && (mr - 611.9).abs() <= 0.1 && (ratio - 17.8).abs() <= 0.1,
        format!("baseline {m0:.2}, compressed {mr:.2}, ratio {ratio:.2}"),
    )
}

fn c4_energy() -> Outcome {
    let rows = reference_cells();
    let mut worst = 0.0f64;
    for r in &rows {
        let profile = builtin::get(&r.benchmark.to_lowercase()).ok_or("unknown benchmark")?;
        let e = energy(profile.mean_tokens * r.ratio, r.mean_tout);
        let want = r.energy_mj.ok_or("fixture lacks energy")?;
        worst = worst.max((e - want).abs());
    }
    check(
        rows.len() == 36 && worst <= 0.2,
        format!("{} rows, max deviation {worst:.3} mJ", rows.len()),
    )
}

fn c5_tobit() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let latent = Normal::<f64>::new(900.0, 300.0).unwrap();
    let obs: Vec<f64> = (0..10_000).map(|_| latent.sample(&mut rng).min(1024.0)).collect();
    let fit = tobit_fit(&obs, 1024.0).map_err(|e| e.to_string())?;
    let mu_err = (fit.mu - 900.0).abs() / 900.0;
    let sd_err = (fit.sigma - 300.0).abs() / 300.0;

    // 74% at the ceiling: latent N(1220, 300).
    let heavy = Normal::<f64>::new(1220.0, 300.0).unwrap();
    let obs2: Vec<f64> = (0..10_000).map(|_| heavy.sample(&mut rng).min(1024.0)).collect();
    let fit2 = tobit_fit(&obs2, 1024.0).map_err(|e| e.to_string())?;
    within(
        start.elapsed(),
        10.0,
        check(
            mu_err < 0.05 && sd_err < 0.05 && fit2.mu > 1024.0,
            format!(
                "censored {:.1}%: mu {:.1} sigma {:.1}; censored {:.1}%: mu {:.1}",
                100.0 * fit.censored_fraction,
                fit.mu,
                fit.sigma,
                100.0 * fit2.censored_fraction,
                fit2.mu
            ),
        ),
    )
}

fn c6_truncated_mean() -> Outcome {
    let c = 1024.0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut points = 0;
    for mu in [700.0, 900.0, 1100.0] {
        for sigma in [50.0, 150.0, 250.0] {
            let dist = Normal::new(mu, sigma).unwrap();
            let (mut sum, mut n) = (0.0, 0usize);
            while n < 1_000_000 {
                let x: f64 = dist.sample(&mut rng);
                if x < c {
                    sum += x;
                    n += 1;
                }
            }
            let analytic = truncated_mean(mu, sigma, c).map_err(|e| e.to_string())?;
            worst = worst.max((analytic - sum / n as f64).abs());
            points += 1;
        }
    }
    check(
        worst < 0.5,
        format!("{points} grid points, max |analytic - MC| {worst:.3}"),
    )
}

fn reference_curve(x: f64) -> f64 {
    if x <= 0.35 {
        1050.0 - 500.0 * x
    } else {
        1050.0 - 500.0 * 0.35 - 1200.0 * (x - 0.35)
    }
}

fn c7_threshold() -> Outcome {
    let xs: Vec<f64> = (1..=19).map(|i| i as f64 * 0.05).collect();
    let exact: Vec<(f64, f64)> = xs.iter().map(|&x| (x, reference_curve(x))).collect();
    let fit = fit_threshold_model(&exact).map_err(|e| e.to_string())?;
    let exact_ok = (fit.tau_hat - 0.35).abs() < 1e-9
        && (fit.intercept - 1050.0).abs() < 1e-6
        && (fit.slope_low + 500.0).abs() < 1e-6
        && (fit.slope_high + 1200.0).abs() < 1e-6
        && fit.rss < 1e-6;
    let noise = Normal::new(0.0, 20.0).unwrap();
    let mut hits = 0;
    for rep in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7_000 + rep);
        let pts: Vec<(f64, f64)> = xs
            .iter()
            .map(|&x| (x, reference_curve(x) + noise.sample(&mut rng)))
            .collect();
        let f = fit_threshold_model(&pts).map_err(|e| e.to_string())?;
        hits += usize::from((0.30..=0.40).contains(&f.tau_hat));
    }
    check(
        exact_ok && hits >= 190,
        format!(
            "exact: tau {} intercept {:.3} slopes ({:.3}, {:.3}) rss {:.1e}; noisy: {hits}/200 in [0.30, 0.40]",
            fit.tau_hat, fit.intercept, fit.slope_low, fit.slope_high, fit.rss
        ),
    )
}

fn c8_bootstrap() -> Outcome {
    let start = Instant::now();
    let config = |seed| BootstrapConfig {
        resamples: 2000,
        level: 0.95,
        seed,
    };
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let mut covered = 0;
    let reps = 500;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(80_000 + rep);
        let sample: Vec<f64> = (0..50).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let ci = bootstrap_bca(&sample, mean, config(rep)).map_err(|e| e.to_string())?;
        covered += usize::from(ci.lower <= 0.0 && 0.0 <= ci.upper);
    }
    let coverage = covered as f64 / reps as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sample: Vec<f64> = (0..50).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let a = bootstrap_bca(&sample, mean, config(99)).map_err(|e| e.to_string())?;
    let b = bootstrap_bca(&sample, mean, config(99)).map_err(|e| e.to_string())?;
    let bit_exact = a.lower.to_bits() == b.lower.to_bits() && a.upper.to_bits() == b.upper.to_bits();
    within(
        start.elapsed(),
        60.0,
        check(
            (0.93..=0.97).contains(&coverage) && bit_exact,
            format!("coverage {coverage:.3}, reproducible {bit_exact}"),
        ),
    )
}

fn c9_welch() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = 0;
    for _ in 0..1000 {
        let na = rng.random_range(2..30);
        let nb = rng.random_range(2..30);
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(-50.0..50.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(-50.0..150.0)).collect();
        let k: f64 = rng.random_range(0.01..100.0);
        let (Ok(ab), Ok(ba)) = (welch_t(&a, &b), welch_t(&b, &a)) else {
            failures += 1;
            continue;
        };
        let sa: Vec<f64> = a.iter().map(|x| x * k).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * k).collect();
        let scaled = welch_t(&sa, &sb).map_err(|e| e.to_string())?;
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
        let ok = close(ab.t_statistic, -ba.t_statistic)
            && close(ab.p_value, ba.p_value)
            && close(ab.degrees_of_freedom, ba.degrees_of_freedom)
            && close(ab.t_statistic, scaled.t_statistic)
            && close(ab.p_value, scaled.p_value)
            && close(ab.degrees_of_freedom, scaled.degrees_of_freedom);
        failures += usize::from(!ok);
    }
    let r = welch_t(&[12.1, 15.3, 9.8, 11.0, 14.2, 13.7], &[22.5, 30.1, 18.4, 25.0]).map_err(|e| e.to_string())?;
    let reference = (r.t_statistic - (-4.369637174179117)).abs() < 1e-9
        && (r.degrees_of_freedom - 3.7351408310864325).abs() < 1e-9
        && (r.p_value - 0.01391814109345597).abs() < 1e-9;
    check(
        failures == 0 && reference,
        format!(
            "{failures}/1000 property failures, reference t {:.12} p {:.12}",
            r.t_statistic, r.p_value
        ),
    )
}

fn c10_synthetic() -> Outcome {
    let params = VerboseCompensationParams {
        t0: 18.0,
        alpha: 379.0,
        tau: 0.35,
        tmax: 1024.0,
        beta: 0.74,
        dispersion: 0.3,
    };
    let mut cfg = SyntheticConfig::new(params, 10);
    cfg.vary_replicates = true;
    let backend = SyntheticBackend::new(cfg).map_err(|e| e.to_string())?;
    let mut hits = 0;
    for i in 0..10_000u32 {
        let mut req = CompletionRequest::new("sim", "Write a Python function to solve");
        req.hints.psi = Some(0.15);
        req.hints.replicate = i;
        hits += usize::from(backend.complete(&req).map_err(|e| e.to_string())?.hit_ceiling);
    }
    let fraction = hits as f64 / 10_000.0;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let plan_path = common::synthetic_plan(dir.path(), 20, 20, 3, "[1.0, 0.7, 0.5, 0.3]", 0.0, "");
    let plan = build_plan(&plan_path).map_err(|e| e.to_string())?;
    let backends = BackendSet::from_plan(&plan).map_err(|e| e.to_string())?;
    let (entries, _) = run(&plan, &backends, &RunOptions::default());
    let records: Vec<_> = entries
        .into_iter()
        .filter_map(|e| match e {
            LogEntry::Record(r) => Some(r),
            LogEntry::Error(_) => None,
        })
        .collect();
    let report = verify_determinism(&records);
    check(
        (fraction - 0.74).abs() <= 0.02 && report.is_deterministic() && records.len() == 240,
        format!(
            "ceiling fraction {fraction:.4}; zero-dispersion run: {} records, {} groups, {} mismatches",
            records.len(),
            report.groups_checked,
            report.mismatches.len()
        ),
    )
}

fn c11_offline_surface() -> Outcome {
    // A synthetic run recorded to an archive, then replayed through the same
    // plan, reproduces every record.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let plan_path = common::synthetic_plan(dir.path(), 4, 4, 3, "[1.0, 0.3]", 0.2, "");
    let plan = build_plan(&plan_path).map_err(|e| e.to_string())?;
    let archive = dir.path().join("archive.jsonl");
    let synth = SyntheticBackend::new(match &plan.models[0].backend {
        psibench_core::backends::BackendConfig::Synthetic(c) => c.clone(),
        _ => return Err("expected synthetic backend".into()),
    })
    .map_err(|e| e.to_string())?;
    let mut recording = BackendSet::new();
    recording.insert(
        "sim",
        Arc::new(RecordingBackend::new(synth, &archive).map_err(|e| e.to_string())?) as Arc<dyn Backend>,
    );
    let live_log = dir.path().join("live.jsonl");
    run_to_log(
        &plan,
        &recording,
        &live_log,
        &RunOptions {
            timestamps: false,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;

    let mut replay = BackendSet::new();
    let rb = ReplayBackend::open(
        &ReplayConfig {
            archive: archive.clone(),
            max_parallel: 4,
        },
        dir.path(),
    )
    .map_err(|e| e.to_string())?;
    replay.insert("sim", Arc::new(rb) as Arc<dyn Backend>);
    let replay_log = dir.path().join("replay.jsonl");
    run_to_log(
        &plan,
        &replay,
        &replay_log,
        &RunOptions {
            timestamps: false,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;

    let key = |r: &psibench_core::trial_engine::TrialRecord| (r.key(), r.output_tokens);
    let mut live: Vec<_> = read_log(&live_log)
        .map_err(|e| e.to_string())?
        .records
        .iter()
        .map(key)
        .collect();
    let mut replayed: Vec<_> = read_log(&replay_log)
        .map_err(|e| e.to_string())?
        .records
        .iter()
        .map(key)
        .collect();
    live.sort();
    replayed.sort();
    let fixture_rows = reference_cells().len();
    let by_model: BTreeMap<_, usize> = reference_cells().iter().fold(BTreeMap::new(), |mut m, r| {
        *m.entry(r.model.clone()).or_default() += 1;
        m
    });
    check(
        live.len() == plan.total_calls()
            && live == replayed
            && fixture_rows == 36
            && by_model.values().all(|&n| n == 12),
        format!(
            "replay reproduced {}/{} synthetic records; fixture {fixture_rows} cells; live experiment not run",
            replayed.len(),
            plan.total_calls()
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("CRI reproduction", c1_cri),
        ("survival reproduction", c2_survival),
        ("reconciliation balanced means", c3_reconciliation),
        ("energy columns", c4_energy),
        ("Tobit recovery", c5_tobit),
        ("truncated-mean oracle", c6_truncated_mean),
        ("threshold fit", c7_threshold),
        ("bootstrap BCa coverage", c8_bootstrap),
        ("Welch t properties", c9_welch),
        ("synthetic calibration", c10_synthetic),
        ("offline acceptance surface", c11_offline_surface),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{}/{} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Synthetic output lengths under the verbose-compensation model.
//!
//! Above the survival threshold the expected length grows linearly with
//! lost survival, `T0 + alpha (1 - psi)`. Below it the model hits the
//! ceiling with probability `beta` and otherwise produces a body centred at
//! `Tmax * beta`. Draws are normal with coefficient of variation
//! `dispersion`, truncated to the admissible range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{default_max_parallel, Backend, BackendError, CompletionRequest, CompletionResponse, TokenSource};
use crate::stats::normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerboseCompensationParams {
    /// Baseline output tokens.
    pub t0: f64,
    /// Extra tokens per unit of lost survival.
    pub alpha: f64,
    /// Survival threshold.
    pub tau: f64,
    /// Generation ceiling.
    pub tmax: f64,
    /// Probability of hitting the ceiling below the threshold.
    pub beta: f64,
    /// Coefficient of variation of the draws.
    #[serde(default)]
    pub dispersion: f64,
}

impl VerboseCompensationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::InvalidParams(m.into()));
        let all_finite = [self.t0, self.alpha, self.tau, self.tmax, self.beta, self.dispersion]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return bad("parameters must be finite");
        }
        if self.t0 < 0.0 {
            return bad("t0 must be >= 0");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if self.tmax <= self.t0 || self.tmax < 1.0 {
            return bad("tmax must exceed t0");
        }
        if self.dispersion < 0.0 {
            return bad("dispersion must be >= 0");
        }
        Ok(())
    }

    /// Expected length under the piecewise model (before rounding).
    pub fn expected_length(&self, psi: f64) -> f64 {
        if psi >= self.tau {
            (self.t0 + self.alpha * (1.0 - psi)).clamp(0.0, self.tmax)
        } else {
            let body = (self.tmax * self.beta).round().min(self.tmax - 1.0);
            self.beta * self.tmax + (1.0 - self.beta) * body
        }
    }
}

/// Normal(center, sd) truncated to `[lo, hi]` by inverse-CDF sampling.
fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, center: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd <= 0.0 {
        return center.clamp(lo, hi);
    }
    let p_lo = normal::cdf((lo - center) / sd);
    let p_hi = normal::cdf((hi - center) / sd);
    if p_hi - p_lo < 1e-12 {
        return center.clamp(lo, hi);
    }
    let u: f64 = rng.random_range(0.0..1.0);
    let p = (p_lo + u * (p_hi - p_lo)).clamp(1e-300, 1.0 - 1e-16);
    (center + sd * normal::inv_cdf(p)).clamp(lo, hi)
}

/// One synthetic output length for survival `psi`.
pub fn synthesize_length<R: Rng + ?Sized>(
    params: &VerboseCompensationParams,
    psi: f64,
    rng: &mut R,
) -> Result<u32, BackendError> {
    params.validate()?;
    if !(0.0..=1.0).contains(&psi) {
        return Err(BackendError::InvalidParams(format!("psi {psi} outside [0, 1]")));
    }
    let tmax = params.tmax.floor();
    let tokens = if psi >= params.tau {
        let center = params.t0 + params.alpha * (1.0 - psi);
        truncated_normal(rng, center, params.dispersion * center.abs(), 0.0, tmax).round()
    } else {
        let hit: f64 = rng.random_range(0.0..1.0);
        if hit < params.beta {
            tmax
        } else {
            // The body stays strictly below the ceiling so that ceiling hits
            // come only from the beta branch.
            let center = tmax * params.beta;
            truncated_normal(rng, center, params.dispersion * center, 0.0, tmax)
                .round()
                .min(tmax - 1.0)
        }
    };
    Ok(tokens.max(0.0) as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub params: VerboseCompensationParams,
    #[serde(default)]
    pub seed: u64,
    /// Give each replicate its own random stream. Off by default, so
    /// replicates of a request are identical like temperature-0 calls.
    #[serde(default)]
    pub vary_replicates: bool,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
}

impl SyntheticConfig {
    pub fn new(params: VerboseCompensationParams, seed: u64) -> Self {
        Self {
            params,
            seed,
            vary_replicates: false,
            max_parallel: default_max_parallel(),
        }
    }
}

pub struct SyntheticBackend {
    config: SyntheticConfig,
}

impl SyntheticBackend {
    pub fn new(config: SyntheticConfig) -> Result<Self, BackendError> {
        config.params.validate()?;
        Ok(Self { config })
    }

    fn trial_rng(&self, request: &CompletionRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(request.digest().as_bytes());
        if self.config.vary_replicates {
            h.update(request.hints.replicate.to_le_bytes());
        }
        let bytes: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(bytes)
    }
}

impl Backend for SyntheticBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let psi = request.hints.psi.ok_or_else(|| {
            BackendError::InvalidParams("synthetic backend needs a survival value (psi) per request".into())
        })?;
        let mut params = self.config.params;
        params.tmax = params.tmax.min(request.max_tokens as f64);
        if params.tmax <= params.t0 {
            return Err(BackendError::InvalidParams(format!(
                "request ceiling {} does not exceed t0 {}",
                request.max_tokens, params.t0
            )));
        }
        let tokens = synthesize_length(&params, psi, &mut self.trial_rng(request))?;
        Ok(CompletionResponse {
            output_text: vec!["tok"; tokens as usize].join(" "),
            output_tokens: tokens,
            hit_ceiling: tokens >= request.max_tokens,
            latency_ms: None,
            token_source: TokenSource::Simulated,
        }
        .normalised(request.max_tokens))
    }

    fn max_parallel(&self) -> usize {
        self.config.max_parallel.max(1)
    }
}

/// One draw of a grid simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDraw {
    pub psi: f64,
    pub trial: u32,
    pub output_tokens: u32,
    pub hit_ceiling: bool,
}

/// Per-point aggregate of a grid simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub psi: f64,
    pub trials: u32,
    pub mean_tout: f64,
    pub ceiling_fraction: f64,
}

/// Draws `trials` lengths at every `psi` in `grid`. Grid point `i` uses
/// stream `i` of a ChaCha generator seeded with `seed`.
pub fn simulate_grid(
    params: &VerboseCompensationParams,
    grid: &[f64],
    trials: u32,
    seed: u64,
) -> Result<Vec<SimulatedDraw>, BackendError> {
    params.validate()?;
    let tmax = params.tmax.floor() as u32;
    let mut out = Vec::with_capacity(grid.len() * trials as usize);
    for (i, &psi) in grid.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for trial in 0..trials {
            let output_tokens = synthesize_length(params, psi, &mut rng)?;
            out.push(SimulatedDraw {
                psi,
                trial,
                output_tokens,
                hit_ceiling: output_tokens >= tmax,
            });
        }
    }
    Ok(out)
}

/// Aggregates draws by `psi`, in first-seen order.
pub fn summarize_grid(draws: &[SimulatedDraw]) -> Vec<GridSummary> {
    let mut out: Vec<(f64, u32, f64, u32)> = Vec::new();
    for d in draws {
        let slot = match out.iter().position(|s| s.0 == d.psi) {
            Some(i) => i,
            None => {
                out.push((d.psi, 0, 0.0, 0));
                out.len() - 1
            }
        };
        let s = &mut out[slot];
        s.1 += 1;
        s.2 += d.output_tokens as f64;
        s.3 += u32::from(d.hit_ceiling);
    }
    out.into_iter()
        .map(|(psi, n, sum, hits)| GridSummary {
            psi,
            trials: n,
            mean_tout: sum / n as f64,
            ceiling_fraction: hits as f64 / n as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::count_output_tokens;

    fn params(t0: f64, alpha: f64, beta: f64, dispersion: f64) -> VerboseCompensationParams {
        VerboseCompensationParams {
            t0,
            alpha,
            tau: 0.35,
            tmax: 1024.0,
            beta,
            dispersion,
        }
    }

    #[test]
    fn no_loss_no_noise_gives_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            synthesize_length(&params(18.1, 300.0, 0.74, 0.0), 1.0, &mut rng).unwrap(),
            18
        );
        assert_eq!(
            synthesize_length(&params(25.0, 379.0, 0.74, 0.0), 0.72, &mut rng).unwrap(),
            131
        );
    }

    #[test]
    fn below_threshold_hits_ceiling_at_rate_beta() {
        let p = params(18.1, 0.0, 0.74, 0.15);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| synthesize_length(&p, 0.15, &mut rng).unwrap() == 1024)
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.74).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn rejects_invalid_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = params(18.0, 1.0, 0.5, 0.0);
        p.tau = 1.0;
        assert!(matches!(
            synthesize_length(&p, 0.5, &mut rng),
            Err(BackendError::InvalidParams(_))
        ));
        let p = params(2000.0, 1.0, 0.5, 0.0);
        assert!(synthesize_length(&p, 0.5, &mut rng).is_err());
        let p = params(18.0, 1.0, 1.5, 0.0);
        assert!(synthesize_length(&p, 0.5, &mut rng).is_err());
        let p = params(18.0, 1.0, 0.5, 0.0);
        assert!(synthesize_length(&p, 1.5, &mut rng).is_err());
    }

    #[test]
    fn mean_is_nonincreasing_in_psi_without_noise() {
        let p = params(25.0, 379.0, 0.74, 0.0);
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let psi = i as f64 / 100.0;
            let m = p.expected_length(psi);
            assert!(m <= prev + 1e-9, "psi={psi}");
            prev = m;
        }
        // Continuous above the threshold, jump at tau.
        assert!((p.expected_length(0.5) - p.expected_length(0.5 + 1e-9)).abs() < 1e-5);
        assert!(p.expected_length(0.35 - 1e-9) - p.expected_length(0.35) > 100.0);
    }

    #[test]
    fn backend_is_reproducible_and_consistent() {
        let cfg = SyntheticConfig::new(params(30.0, 500.0, 0.6, 0.3), 5);
        let a = SyntheticBackend::new(cfg.clone()).unwrap();
        let b = SyntheticBackend::new(cfg).unwrap();
        let mut req = CompletionRequest::new("m", "truncated prompt");
        req.hints.psi = Some(0.2);
        for replicate in 0..4 {
            req.hints.replicate = replicate;
            let ra = a.complete(&req).unwrap();
            assert_eq!(ra, b.complete(&req).unwrap());
            assert_eq!(count_output_tokens(&ra.output_text), ra.output_tokens);
            assert_eq!(ra.hit_ceiling, ra.output_tokens == 1024);
        }
        req.hints.psi = None;
        assert!(matches!(a.complete(&req), Err(BackendError::InvalidParams(_))));
    }

    #[test]
    fn vary_replicates_changes_streams() {
        let mut cfg = SyntheticConfig::new(params(30.0, 500.0, 0.5, 0.3), 5);
        cfg.vary_replicates = true;
        let backend = SyntheticBackend::new(cfg).unwrap();
        let mut req = CompletionRequest::new("m", "p");
        req.hints.psi = Some(0.8);
        let outs: Vec<u32> = (0..8)
            .map(|k| {
                req.hints.replicate = k;
                backend.complete(&req).unwrap().output_tokens
            })
            .collect();
        assert!(outs.iter().any(|&o| o != outs[0]));
    }

    #[test]
    fn grid_simulation_is_seeded() {
        let p = params(18.0, 0.0, 0.74, 0.0);
        let a = simulate_grid(&p, &[0.15, 1.0], 200, 3).unwrap();
        assert_eq!(a, simulate_grid(&p, &[0.15, 1.0], 200, 3).unwrap());
        let s = summarize_grid(&a);
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].mean_tout, 18.0);
        assert_eq!(s[1].ceiling_fraction, 0.0);
        assert!((s[0].ceiling_fraction - 0.74).abs() < 0.1);
        assert!(simulate_grid(&params(18.0, 0.0, 1.5, 0.0), &[0.5], 1, 0).is_err());
    }
}

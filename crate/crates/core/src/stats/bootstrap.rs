//! Bias-corrected and accelerated (BCa) bootstrap intervals.
//!
//! Resample `b` draws from its own ChaCha stream `(seed, b)`, so the result
//! is identical whether resamples run sequentially or on a thread pool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normal, StatsError};

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const MIN_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            level: DEFAULT_LEVEL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
    pub bias_correction: f64,
    pub acceleration: f64,
    /// Every resample produced the same statistic; the interval collapsed
    /// to a point.
    pub degenerate: bool,
}

/// BCa interval for `statistic` over `sample`.
pub fn bootstrap_bca<T, F>(sample: &[T], statistic: F, config: BootstrapConfig) -> Result<BootstrapCi, StatsError>
where
    T: Clone + Send + Sync,
    F: Fn(&[T]) -> f64 + Sync,
{
    if sample.len() < 2 {
        return Err(StatsError::InsufficientData(
            "bootstrap needs at least 2 observations".into(),
        ));
    }
    if config.resamples < MIN_RESAMPLES {
        return Err(StatsError::InvalidArgument(format!(
            "bootstrap needs at least {MIN_RESAMPLES} resamples, got {}",
            config.resamples
        )));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(StatsError::InvalidArgument(format!(
            "confidence level {} outside (0, 1)",
            config.level
        )));
    }

    let estimate = statistic(sample);
    let mut boot = resample_statistics(sample, &statistic, config);
    let jack = jackknife(sample, &statistic);
    Ok(bca_interval(estimate, &mut boot, &jack, config))
}

fn one_resample<T: Clone, F: Fn(&[T]) -> f64>(sample: &[T], statistic: &F, seed: u64, b: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    let n = sample.len();
    let draw: Vec<T> = (0..n).map(|_| sample[rng.random_range(0..n)].clone()).collect();
    statistic(&draw)
}

#[cfg(feature = "parallel")]
fn resample_statistics<T, F>(sample: &[T], statistic: &F, config: BootstrapConfig) -> Vec<f64>
where
    T: Clone + Send + Sync,
    F: Fn(&[T]) -> f64 + Sync,
{
    use rayon::prelude::*;
    (0..config.resamples)
        .into_par_iter()
        .map(|b| one_resample(sample, statistic, config.seed, b))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn resample_statistics<T, F>(sample: &[T], statistic: &F, config: BootstrapConfig) -> Vec<f64>
where
    T: Clone + Send + Sync,
    F: Fn(&[T]) -> f64 + Sync,
{
    (0..config.resamples)
        .map(|b| one_resample(sample, statistic, config.seed, b))
        .collect()
}

/// Leave-one-out statistics.
pub fn jackknife<T: Clone, F: Fn(&[T]) -> f64>(sample: &[T], statistic: &F) -> Vec<f64> {
    let mut buf: Vec<T> = Vec::with_capacity(sample.len().saturating_sub(1));
    (0..sample.len())
        .map(|i| {
            buf.clear();
            buf.extend_from_slice(&sample[..i]);
            buf.extend_from_slice(&sample[i + 1..]);
            statistic(&buf)
        })
        .collect()
}

/// Jackknife acceleration `a = Σ d³ / (6 (Σ d²)^{3/2})`, `d = mean - θ_(i)`.
pub fn acceleration(jack: &[f64]) -> f64 {
    let m = jack.iter().sum::<f64>() / jack.len() as f64;
    let (num, den) = jack.iter().fold((0.0, 0.0), |(n, d), &t| {
        let diff = m - t;
        (n + diff * diff * diff, d + diff * diff)
    });
    if den <= 0.0 {
        0.0
    } else {
        num / (6.0 * den.powf(1.5))
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval from bootstrap statistics.
pub fn percentile_interval(boot: &mut [f64], level: f64) -> (f64, f64) {
    boot.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (quantile_sorted(boot, alpha), quantile_sorted(boot, 1.0 - alpha))
}

/// BCa interval from precomputed bootstrap and jackknife statistics.
pub fn bca_interval(estimate: f64, boot: &mut [f64], jack: &[f64], config: BootstrapConfig) -> BootstrapCi {
    boot.sort_by(f64::total_cmp);
    let b = boot.len() as f64;
    let mut ci = BootstrapCi {
        estimate,
        lower: estimate,
        upper: estimate,
        level: config.level,
        resamples: boot.len(),
        seed: config.seed,
        bias_correction: 0.0,
        acceleration: 0.0,
        degenerate: false,
    };
    if boot.first() == boot.last() {
        ci.degenerate = true;
        return ci;
    }

    let below = boot.iter().filter(|&&t| t < estimate).count() as f64;
    let ties = boot.iter().filter(|&&t| t == estimate).count() as f64;
    let prop = ((below + 0.5 * ties) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let z0 = normal::inv_cdf(prop);
    let a = acceleration(jack);

    let alpha = (1.0 - config.level) / 2.0;
    let adjust = |q: f64| {
        let z = normal::inv_cdf(q);
        let num = z0 + z;
        let den = 1.0 - a * num;
        if den <= 0.0 {
            if num > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            normal::cdf(z0 + num / den)
        }
    };
    ci.lower = quantile_sorted(boot, adjust(alpha));
    ci.upper = quantile_sorted(boot, adjust(1.0 - alpha));
    ci.bias_correction = z0;
    ci.acceleration = a;
    ci
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

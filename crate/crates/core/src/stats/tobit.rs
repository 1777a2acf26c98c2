//! Censored-normal (Tobit) maximum likelihood for right-censored output
//! lengths, plus the below-ceiling truncated mean.
//!
//! The optimiser works in `(mu, s)` with `sigma = exp(s)` and takes damped
//! Newton steps using the analytic Hessian, falling back to scaled gradient
//! ascent when the Hessian is not negative definite.

use serde::{Deserialize, Serialize};

use super::{normal, StatsError};

pub const MIN_UNCENSORED: usize = 5;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TobitMethod {
    /// Censored-normal likelihood maximised numerically.
    Newton,
    /// No censored points: closed-form normal MLE.
    NormalFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TobitFit {
    /// Latent mean.
    pub mu: f64,
    /// Latent standard deviation.
    pub sigma: f64,
    pub ceiling: f64,
    pub censored_fraction: f64,
    pub log_likelihood: f64,
    /// `(ceiling - mu) / sigma`.
    pub standardized_bound: f64,
    pub iterations: usize,
    pub method: TobitMethod,
}

impl TobitFit {
    /// Mean of the latent normal below the ceiling.
    pub fn truncated_mean(&self) -> f64 {
        truncated_mean(self.mu, self.sigma, self.ceiling).unwrap_or(f64::NAN)
    }
}

/// One optimiser iterate, reported on convergence failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TobitIterate {
    pub iteration: usize,
    pub mu: f64,
    pub sigma: f64,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
}

struct Split<'a> {
    uncensored: Vec<f64>,
    censored: usize,
    ceiling: f64,
    _obs: &'a [f64],
}

fn split<'a>(observations: &'a [f64], ceiling: f64) -> Result<Split<'a>, StatsError> {
    if !ceiling.is_finite() {
        return Err(StatsError::InvalidArgument("ceiling must be finite".into()));
    }
    let mut uncensored = Vec::with_capacity(observations.len());
    let mut censored = 0;
    for &y in observations {
        if !y.is_finite() || y > ceiling {
            return Err(StatsError::InvalidArgument(format!(
                "observation {y} is not finite or exceeds the ceiling {ceiling}"
            )));
        }
        if y == ceiling {
            censored += 1;
        } else {
            uncensored.push(y);
        }
    }
    Ok(Split {
        uncensored,
        censored,
        ceiling,
        _obs: observations,
    })
}

/// Censored-normal log-likelihood
/// `Σ_unc [ln φ(z) - ln σ] + Σ_cens ln(1 - Φ((c - μ)/σ))`.
pub fn tobit_log_likelihood(observations: &[f64], ceiling: f64, mu: f64, sigma: f64) -> f64 {
    let ln_sigma = sigma.ln();
    let mut ll = 0.0;
    for &y in observations {
        if y >= ceiling {
            ll += normal::ln_sf((ceiling - mu) / sigma);
        } else {
            ll += normal::ln_pdf((y - mu) / sigma) - ln_sigma;
        }
    }
    ll
}

/// Gradient of [`tobit_log_likelihood`] with respect to `(mu, ln sigma)`.
pub fn tobit_gradient(observations: &[f64], ceiling: f64, mu: f64, sigma: f64) -> [f64; 2] {
    let mut g = [0.0; 2];
    for &y in observations {
        if y >= ceiling {
            let a = (ceiling - mu) / sigma;
            let lambda = normal::hazard(a);
            g[0] += lambda / sigma;
            g[1] += lambda * a;
        } else {
            let z = (y - mu) / sigma;
            g[0] += z / sigma;
            g[1] += z * z - 1.0;
        }
    }
    g
}

/// Value, gradient and Hessian in `(mu, s)`, using per-group sums.
fn evaluate(data: &Split<'_>, mu: f64, s: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let sigma = s.exp();
    let mut ll = 0.0;
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for &y in &data.uncensored {
        let z = (y - mu) / sigma;
        ll += normal::ln_pdf(z) - s;
        g[0] += z / sigma;
        g[1] += z * z - 1.0;
        h[0][0] -= 1.0 / (sigma * sigma);
        h[0][1] -= 2.0 * z / sigma;
        h[1][1] -= 2.0 * z * z;
    }
    if data.censored > 0 {
        let k = data.censored as f64;
        let a = (data.ceiling - mu) / sigma;
        let lambda = normal::hazard(a);
        let slope = lambda * (lambda - a);
        ll += k * normal::ln_sf(a);
        g[0] += k * lambda / sigma;
        g[1] += k * lambda * a;
        h[0][0] -= k * slope / (sigma * sigma);
        h[0][1] -= k * (slope * a + lambda) / sigma;
        h[1][1] -= k * a * (slope * a + lambda);
    }
    h[1][0] = h[0][1];
    (ll, g, h)
}

fn scaled_norm(g: [f64; 2], sigma: f64, n: f64) -> f64 {
    // Gradient of the mean log-likelihood, with the mu component in units
    // of sigma so both coordinates are dimensionless.
    ((g[0] * sigma / n).powi(2) + (g[1] / n).powi(2)).sqrt()
}

/// Maximum-likelihood fit of a normal latent variable observed with
/// right-censoring at `ceiling`. Observations equal to `ceiling` are
/// censored.
pub fn tobit_fit(observations: &[f64], ceiling: f64) -> Result<TobitFit, StatsError> {
    let data = split(observations, ceiling)?;
    let n = observations.len() as f64;
    if data.uncensored.is_empty() && data.censored > 0 {
        return Err(StatsError::Unidentifiable);
    }
    if data.uncensored.len() < MIN_UNCENSORED {
        return Err(StatsError::InsufficientData(format!(
            "tobit fit needs >= {MIN_UNCENSORED} uncensored observations, got {}",
            data.uncensored.len()
        )));
    }
    let m = n_mean(&data.uncensored);
    let ss: f64 = data.uncensored.iter().map(|y| (y - m).powi(2)).sum();
    let censored_fraction = data.censored as f64 / n;

    if data.censored == 0 {
        let sigma = (ss / n).sqrt();
        if sigma <= 0.0 {
            return Err(StatsError::InsufficientData("zero variance sample".into()));
        }
        return Ok(TobitFit {
            mu: m,
            sigma,
            ceiling,
            censored_fraction: 0.0,
            log_likelihood: tobit_log_likelihood(observations, ceiling, m, sigma),
            standardized_bound: (ceiling - m) / sigma,
            iterations: 0,
            method: TobitMethod::NormalFallback,
        });
    }

    let sd = (ss / (data.uncensored.len() as f64 - 1.0)).sqrt();
    let sd = if sd > 0.0 { sd } else { (ceiling.abs() * 1e-3).max(1e-3) };
    let mut mu = m * (1.0 + censored_fraction);
    if !mu.is_finite() || mu == 0.0 {
        mu = m + censored_fraction * sd;
    }
    let mut s = sd.ln();
    let mut trace = Vec::new();

    let (mut ll, mut g, mut h) = evaluate(&data, mu, s);
    for iteration in 0..MAX_ITERATIONS {
        let sigma = s.exp();
        let gnorm = scaled_norm(g, sigma, n);
        trace.push(TobitIterate {
            iteration,
            mu,
            sigma,
            log_likelihood: ll,
            gradient_norm: gnorm,
        });
        if gnorm < GRADIENT_TOLERANCE {
            return Ok(TobitFit {
                mu,
                sigma,
                ceiling,
                censored_fraction,
                log_likelihood: ll,
                standardized_bound: (ceiling - mu) / sigma,
                iterations: iteration,
                method: TobitMethod::Newton,
            });
        }

        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let step = if h[0][0] < 0.0 && det > 0.0 {
            // Newton: solve H d = -g.
            [
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            ]
        } else {
            // Ascent with a diagonal preconditioner sized to the problem.
            [g[0] * sigma * sigma / n, g[1] / n]
        };

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_mu = mu + t * step[0];
            let cand_s = s + (t * step[1]).clamp(-2.0, 2.0);
            let (cll, cg, ch) = evaluate(&data, cand_mu, cand_s);
            if cll.is_finite() && cll >= ll - 1e-12 * ll.abs() {
                mu = cand_mu;
                s = cand_s;
                ll = cll;
                g = cg;
                h = ch;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(StatsError::ConvergenceFailure { trace })
}

fn n_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `E[T | T < c]` for `T ~ N(mu, sigma²)`: `mu - sigma φ(α)/Φ(α)`,
/// `α = (c - mu)/sigma`. The ratio is evaluated in the log domain so
/// ceilings far below the mean stay finite.
pub fn truncated_mean(mu: f64, sigma: f64, ceiling: f64) -> Result<f64, StatsError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(StatsError::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if ceiling == f64::INFINITY {
        return Ok(mu);
    }
    let alpha = (ceiling - mu) / sigma;
    Ok(mu - sigma * normal::mills_lower(alpha))
}

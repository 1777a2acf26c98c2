//! Continuous two-piece linear fit of mean output length against Ψ.
//!
//! For a candidate break `τ` the model is linear in its coefficients:
//! `y = b + s_low·min(x, τ) + s_high·max(x - τ, 0)`. Candidates are the
//! interior observed Ψ values and the midpoints between neighbours; the
//! candidate with the smallest residual sum of squares wins, ties going to
//! the smaller `τ`.

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub tau_hat: f64,
    /// Value at Ψ = 0.
    pub intercept: f64,
    /// Slope for Ψ < τ.
    pub slope_low: f64,
    /// Slope for Ψ > τ.
    pub slope_high: f64,
    pub rss: f64,
    /// The two slopes coincide: the data carry no break.
    pub degenerate: bool,
}

impl ThresholdFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope_low * x.min(self.tau_hat) + self.slope_high * (x - self.tau_hat).max(0.0)
    }
}

fn solve3(mut m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                let pivot_row = m[col];
                for (v, p) in m[row].iter_mut().zip(pivot_row).skip(col) {
                    *v -= f * p;
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

fn fit_at(points: &[(f64, f64)], tau: f64) -> Option<([f64; 3], f64)> {
    // Normal equations for the hinge basis [1, min(x, τ), max(x - τ, 0)].
    let mut m = [[0.0; 4]; 3];
    for &(x, y) in points {
        let basis = [1.0, x.min(tau), (x - tau).max(0.0)];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            m[i][3] += basis[i] * y;
        }
    }
    let coef = solve3(m)?;
    let rss = points
        .iter()
        .map(|&(x, y)| {
            let pred = coef[0] + coef[1] * x.min(tau) + coef[2] * (x - tau).max(0.0);
            (y - pred).powi(2)
        })
        .sum();
    Some((coef, rss))
}

fn candidates(xs: &[f64]) -> Vec<f64> {
    let interior = xs.len().saturating_sub(2);
    let mut out: Vec<f64> = xs.iter().skip(1).take(interior).copied().collect();
    out.extend(xs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.sort_by(f64::total_cmp);
    out.dedup();
    out.retain(|&t| {
        let left = xs.iter().filter(|&&x| x <= t).count();
        let right = xs.iter().filter(|&&x| x >= t).count();
        t > 0.0 && t < 1.0 && left >= 2 && right >= 2
    });
    out
}

/// Grid-searched continuous piecewise-linear fit of `(Ψ, mean T_out)`.
pub fn fit_threshold_model(points: &[(f64, f64)]) -> Result<ThresholdFit, StatsError> {
    if points.len() < 4 {
        return Err(StatsError::InsufficientData(format!(
            "threshold fit needs >= 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(StatsError::InvalidArgument("non-finite point".into()));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let tss: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let tie = 1e-12 * tss.max(1.0);

    let mut best: Option<(f64, [f64; 3], f64)> = None;
    for tau in candidates(&xs) {
        let Some((coef, rss)) = fit_at(points, tau) else {
            continue;
        };
        match best {
            Some((_, _, best_rss)) if rss >= best_rss - tie => {}
            _ => best = Some((tau, coef, rss)),
        }
    }
    let (tau, coef, rss) = best.ok_or(StatsError::NoBreakpoint)?;
    let scale = coef[1].abs().max(coef[2].abs()).max(1.0);
    Ok(ThresholdFit {
        tau_hat: tau,
        intercept: coef[0],
        slope_low: coef[1],
        slope_high: coef[2],
        rss: rss.max(0.0),
        degenerate: (coef[1] - coef[2]).abs() <= 1e-6 * scale,
    })
}

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{mean_and_variance, StatsError};

/// Welch's unequal-variance two-sample t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_statistic: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub degrees_of_freedom: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Two-sided Welch test of `mean(a) == mean(b)`.
///
/// Both samples need at least two observations. When both variances are
/// zero the test is undefined and [`StatsError::DegenerateTest`] carries
/// the conventional limit (`t = 0, p = 1` for equal means, `t = ±inf,
/// p = 0` otherwise).
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "welch test needs >= 2 observations per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_and_variance(a);
    let (mb, vb) = mean_and_variance(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let qa = va / na;
    let qb = vb / nb;
    let se2 = qa + qb;
    if se2 == 0.0 {
        let diff = ma - mb;
        let (t, p) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
        return Err(StatsError::DegenerateTest { t, p });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| StatsError::InsufficientData(format!("student-t with df={df}: {e}")))?;
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(WelchResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
    })
}

//! Energy, explosion ratios, weighted mixtures and the Compression
//! Robustness Index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("baseline is zero; ratio undefined")]
    DivisionByZero,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid energy model: {0}")]
    InvalidEnergyModel(String),
    #[error("benchmark {0}: baseline quality is zero; quality ratio undefined")]
    UndefinedQualityRatio(String),
    #[error("invalid outcome: {0}")]
    InvalidOutcome(String),
    #[error("no usable benchmark outcomes")]
    NoOutcomes,
}

/// Per-token energy coefficients in mJ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub eps_in: f64,
    pub eps_out: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            eps_in: 0.15,
            eps_out: 0.45,
        }
    }
}

impl EnergyModel {
    pub fn new(eps_in: f64, eps_out: f64) -> Result<Self, MetricsError> {
        let m = Self { eps_in, eps_out };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.eps_in > 0.0 && self.eps_out > 0.0) || !self.eps_in.is_finite() || !self.eps_out.is_finite() {
            return Err(MetricsError::InvalidEnergyModel(format!(
                "coefficients must be positive, got ({}, {})",
                self.eps_in, self.eps_out
            )));
        }
        Ok(())
    }

    /// Energy in mJ for one query.
    pub fn energy(&self, t_in: f64, t_out: f64) -> f64 {
        self.eps_in * t_in + self.eps_out * t_out
    }
}

/// Energy with the default coefficients.
pub fn energy(t_in: f64, t_out: f64) -> f64 {
    EnergyModel::default().energy(t_in, t_out)
}

pub fn explosion_ratio(baseline: f64, compressed: f64) -> Result<f64, MetricsError> {
    if baseline == 0.0 {
        return Err(MetricsError::DivisionByZero);
    }
    Ok(compressed / baseline)
}

/// `Σ w_b v_b`; weights must be non-negative and sum to 1.
pub fn weighted_mixture(values: &[f64], weights: &[f64]) -> Result<f64, MetricsError> {
    check_weights(weights, values.len())?;
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum())
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn check_weights(weights: &[f64], n: usize) -> Result<(), MetricsError> {
    if weights.len() != n || n == 0 {
        return Err(MetricsError::InvalidWeights(format!(
            "expected {n} weights, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(MetricsError::InvalidWeights("weights must be non-negative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(MetricsError::InvalidWeights(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Baseline and compressed quality and length for one benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub benchmark: String,
    pub q0: f64,
    pub qr: f64,
    pub t0: f64,
    pub tr: f64,
    pub tmax: f64,
}

impl BenchmarkOutcome {
    fn validate(&self) -> Result<(), MetricsError> {
        let bad = |m: &str| Err(MetricsError::InvalidOutcome(format!("{}: {m}", self.benchmark)));
        if !(0.0..=1.0).contains(&self.q0) {
            return bad("q0 must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.qr) {
            return bad("qr must lie in [0, 1]");
        }
        if !(self.t0 >= 0.0 && self.tr >= 0.0) {
            return bad("mean lengths must be non-negative");
        }
        if self.tmax.is_nan() || self.tmax <= 0.0 {
            return bad("tmax must be positive");
        }
        Ok(())
    }

    /// `1 - max(0, Tr - T0) / Tmax`. Shrinkage is not rewarded.
    pub fn length_factor(&self) -> f64 {
        1.0 - (self.tr - self.t0).max(0.0) / self.tmax
    }

    pub fn term(&self) -> Result<CriTerm, MetricsError> {
        self.validate()?;
        if self.q0 == 0.0 {
            return Err(MetricsError::UndefinedQualityRatio(self.benchmark.clone()));
        }
        let quality_ratio = self.qr / self.q0;
        let length_factor = self.length_factor();
        Ok(CriTerm {
            benchmark: self.benchmark.clone(),
            quality_ratio,
            length_factor,
            term: quality_ratio * length_factor,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriTerm {
    pub benchmark: String,
    pub quality_ratio: f64,
    pub length_factor: f64,
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriReport {
    pub model: String,
    pub ratio: f64,
    pub terms: Vec<CriTerm>,
    /// Benchmarks dropped because their baseline quality is zero.
    pub excluded: Vec<String>,
    pub cri: f64,
    /// Set when some compressed quality beats its baseline, which can push
    /// the index above 1. The value is left unclamped.
    pub exceeds_one: bool,
}

/// Equal-weight CRI over `outcomes`.
pub fn cri(model: &str, ratio: f64, outcomes: &[BenchmarkOutcome]) -> Result<CriReport, MetricsError> {
    cri_with_weights(model, ratio, outcomes, None)
}

/// CRI with optional workload weights (one per outcome, summing to 1).
/// Weights of excluded benchmarks are dropped and the rest renormalised.
pub fn cri_with_weights(
    model: &str,
    ratio: f64,
    outcomes: &[BenchmarkOutcome],
    weights: Option<&[f64]>,
) -> Result<CriReport, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::NoOutcomes);
    }
    if let Some(w) = weights {
        check_weights(w, outcomes.len())?;
    }
    let tmax = outcomes[0].tmax;
    if outcomes.iter().any(|o| o.tmax != tmax) {
        return Err(MetricsError::InvalidOutcome("all outcomes must share tmax".into()));
    }
    let mut terms = Vec::new();
    let mut kept_weights = Vec::new();
    let mut excluded = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        match o.term() {
            Ok(t) => {
                terms.push(t);
                kept_weights.push(weights.map_or(1.0, |w| w[i]));
            }
            Err(MetricsError::UndefinedQualityRatio(b)) => excluded.push(b),
            Err(e) => return Err(e),
        }
    }
    let total: f64 = kept_weights.iter().sum();
    if terms.is_empty() || total <= 0.0 {
        return Err(MetricsError::NoOutcomes);
    }
    let cri = terms.iter().zip(&kept_weights).map(|(t, w)| t.term * w).sum::<f64>() / total;
    Ok(CriReport {
        model: model.to_string(),
        ratio,
        exceeds_one: terms.iter().any(|t| t.quality_ratio > 1.0),
        terms,
        excluded,
        cri,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn outcome(b: &str, q0: f64, qr: f64, t0: f64, tr: f64) -> BenchmarkOutcome {
        BenchmarkOutcome {
            benchmark: b.into(),
            q0,
            qr,
            t0,
            tr,
            tmax: 1024.0,
        }
    }

    #[test]
    fn energy_examples() {
        assert_abs_diff_eq!(energy(30.1, 18.1), 12.66, epsilon = 1e-9);
        assert_eq!(energy(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(energy(9.03, 1020.4), 460.5345, epsilon = 1e-9);
        assert!(EnergyModel::new(0.0, 0.45).is_err());
        assert!(EnergyModel::new(0.15, f64::NAN).is_err());
    }

    #[test]
    fn explosion_examples() {
        assert_abs_diff_eq!(
            explosion_ratio(18.1, 1020.4).unwrap(),
            56.375_690_607_734_81,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(explosion_ratio(25.0, 131.0).unwrap(), 5.24, epsilon = 1e-12);
        assert_eq!(explosion_ratio(7.0, 7.0).unwrap(), 1.0);
        assert_eq!(explosion_ratio(0.0, 5.0), Err(MetricsError::DivisionByZero));
    }

    #[test]
    fn mixture_examples() {
        let third = uniform_weights(3);
        assert_abs_diff_eq!(
            weighted_mixture(&[1020.4, 131.0, 684.4], &third).unwrap(),
            611.9333333333333,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            weighted_mixture(&[1020.4, 131.0], &[0.73, 0.27]).unwrap(),
            780.262,
            epsilon = 1e-9
        );
        assert_eq!(weighted_mixture(&[42.0], &[1.0]).unwrap(), 42.0);
        assert!(matches!(
            weighted_mixture(&[1.0, 2.0], &[0.5, 0.6]),
            Err(MetricsError::InvalidWeights(_))
        ));
        assert!(weighted_mixture(&[1.0, 2.0], &[1.5, -0.5]).is_err());
        assert!(weighted_mixture(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn cri_terms() {
        let perfect = outcome("b", 0.8, 0.8, 30.0, 30.0);
        assert_eq!(perfect.term().unwrap().term, 1.0);
        let shrink = outcome("b", 0.8, 0.4, 30.0, 10.0);
        assert_eq!(shrink.length_factor(), 1.0);
        let report = cri("m", 0.3, &[perfect.clone(), outcome("z", 0.0, 0.1, 1.0, 2.0)]).unwrap();
        assert_eq!(report.excluded, vec!["z".to_string()]);
        assert_eq!(report.cri, 1.0);
        let above = cri("m", 0.3, &[outcome("b", 0.5, 0.6, 20.0, 20.0)]).unwrap();
        assert!(above.exceeds_one);
        assert_abs_diff_eq!(above.cri, 1.2, epsilon = 1e-12);
        assert!(cri("m", 0.3, &[]).is_err());
        let mut other = perfect.clone();
        other.tmax = 4096.0;
        assert!(cri("m", 0.3, &[perfect, other]).is_err());
    }

    #[test]
    fn weighted_cri_renormalises_over_exclusions() {
        let a = outcome("a", 0.5, 0.5, 10.0, 10.0);
        let b = outcome("b", 0.5, 0.25, 10.0, 10.0);
        let z = outcome("z", 0.0, 0.0, 10.0, 10.0);
        let r = cri_with_weights("m", 0.3, &[a, b, z], Some(&[0.25, 0.25, 0.5])).unwrap();
        assert_abs_diff_eq!(r.cri, 0.75, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn cri_monotone(q0 in 0.05f64..1.0, qr_frac in 0.0f64..1.0, t0 in 0.0f64..500.0, tr in 0.0f64..1024.0, dt in 0.0f64..200.0, dq in 0.0f64..0.5) {
            let qr = q0 * qr_frac;
            let base = [outcome("a", q0, qr, t0, tr), outcome("b", 0.7, 0.5, 40.0, 90.0)];
            let c0 = cri("m", 0.3, &base).unwrap().cri;
            let mut longer = base.clone();
            longer[0].tr = (tr + dt).min(1024.0 + t0);
            prop_assert!(cri("m", 0.3, &longer).unwrap().cri <= c0 + 1e-12);
            let mut better = base.clone();
            better[0].qr = (qr + dq).min(1.0);
            prop_assert!(cri("m", 0.3, &better).unwrap().cri >= c0 - 1e-12);
        }

        #[test]
        fn energy_is_linear(a in 0.0f64..1e4, b in 0.0f64..1e4, c in 0.0f64..1e4, d in 0.0f64..1e4) {
            let lhs = energy(a + c, b + d);
            let rhs = energy(a, b) + energy(c, d);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1.0));
        }
    }
}

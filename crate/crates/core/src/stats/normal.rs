//! Standard normal density and distribution function, evaluated in the log
//! domain so that deep tails neither underflow nor lose precision.

use libm::erfc;
use statrs::function::erf::erfc_inv;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn pdf(x: f64) -> f64 {
    ln_pdf(x).exp()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Φ(x)`.
pub fn ln_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-0.5 * erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    } else if x > -20.0 {
        cdf(x).ln()
    } else {
        // Asymptotic series for the lower tail:
        // Φ(x) ~ φ(x)/(-x) * (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸).
        let inv2 = 1.0 / (x * x);
        let series = 1.0 - inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2 * (1.0 - 7.0 * inv2)));
        ln_pdf(x) - (-x).ln() + series.ln()
    }
}

/// `ln(1 - Φ(x)) = ln Φ(-x)`.
pub fn ln_sf(x: f64) -> f64 {
    ln_cdf(-x)
}

/// `φ(x) / Φ(x)`, finite for every finite `x`.
pub fn mills_lower(x: f64) -> f64 {
    (ln_pdf(x) - ln_cdf(x)).exp()
}

/// Hazard `φ(x) / (1 - Φ(x))`.
pub fn hazard(x: f64) -> f64 {
    mills_lower(-x)
}

/// `Φ⁻¹(p)` for `p` in `(0, 1)`.
pub fn inv_cdf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-15);
        let c = cdf(1.959_963_984_540_054);
        assert!((c - 0.975).abs() < 1e-12, "{c:e}");
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((inv_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((inv_cdf(0.5)).abs() < 1e-12);
    }

    #[test]
    fn log_cdf_is_continuous_across_branches() {
        let left = ln_cdf(-20.0 - 1e-9);
        let right = ln_cdf(-20.0 + 1e-9);
        assert!((left - right).abs() < 1e-6, "{left} vs {right}");
        // ln Φ(-40) from high-precision arithmetic.
        assert!((ln_cdf(-40.0) - (-804.608_442_013_754_8)).abs() < 1e-6);
        assert!(ln_cdf(10.0) < 0.0 && ln_cdf(10.0) > -1e-20);
    }

    #[test]
    fn mills_ratio_limits() {
        // φ(0)/Φ(0) = 2φ(0).
        assert!((mills_lower(0.0) - 0.797_884_560_802_865_4).abs() < 1e-14);
        // For x -> -inf, φ/Φ ~ -x.
        let x = -60.0;
        assert!((mills_lower(x) / -x - 1.0).abs() < 1e-3);
        assert!(mills_lower(40.0) < 1e-300);
    }
}

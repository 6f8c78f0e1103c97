//! Effect size, correlation and post-hoc power.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

use super::{mean, sample_variance, StatsError};

/// Cohen's d of `treatment` relative to `baseline` with pooled sample
/// standard deviation. Positive means the treatment scored higher.
pub fn cohens_d(treatment: &[f64], baseline: &[f64]) -> Result<f64, StatsError> {
    for s in [treatment, baseline] {
        if s.len() < 2 {
            return Err(StatsError::TooFewPoints { needed: 2, got: s.len() });
        }
    }
    let (n1, n2) = (treatment.len() as f64, baseline.len() as f64);
    let pooled = ((n1 - 1.0) * sample_variance(treatment) + (n2 - 1.0) * sample_variance(baseline))
        / (n1 + n2 - 2.0);
    if pooled <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((mean(treatment) - mean(baseline)) / pooled.sqrt())
}

/// Pearson product-moment correlation, clamped to `[-1, 1]`.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewPoints { needed: 3, got: x.len() });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Standard normal CDF via the error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Two-sided power of a two-sample z-test under the normal approximation.
///
/// `λ = |d|·sqrt(n1·n2/(n1+n2))`, `power = Φ(λ - z) + Φ(-λ - z)` with
/// `z = Φ⁻¹(1 - α/2)`.
pub fn posthoc_power(d: f64, n1: usize, n2: usize, alpha: f64) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    let lambda = d.abs() * (a * b / (a + b)).sqrt();
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    (normal_cdf(lambda - z) + normal_cdf(-lambda - z)).clamp(0.0, 1.0)
}

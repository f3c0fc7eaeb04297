//! The discretized mixture: each Gaussian convolved with a unit-width uniform,
//! evaluated at integer symbols.

use gmc_tensor::special::{bin_mass, normal_interval};

use crate::error::CoderError;

/// Lower clamp applied to every likelihood before taking a logarithm. Shared by
/// the differentiable rate term and [`crate::entropy::estimate_bits`].
pub const LIKELIHOOD_FLOOR: f64 = 1e-9;

/// Checks that `w` lies on the simplex (to 1e-6) and every `σ` is finite and positive.
pub fn check_mixture(w: &[f64], mu: &[f64], sigma: &[f64]) -> Result<(), CoderError> {
    if w.is_empty() || w.len() != mu.len() || w.len() != sigma.len() {
        return Err(CoderError::Domain(format!(
            "component counts differ: {} weights, {} means, {} stds",
            w.len(),
            mu.len(),
            sigma.len()
        )));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(CoderError::Domain(format!("negative or non-finite weight in {w:?}")));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(CoderError::Domain(format!("weights sum to {total}")));
    }
    if let Some(s) = sigma.iter().find(|&&s| !(s > 0.0) || !s.is_finite()) {
        return Err(CoderError::Domain(format!("invalid std {s}")));
    }
    if let Some(m) = mu.iter().find(|m| !m.is_finite()) {
        return Err(CoderError::Domain(format!("invalid mean {m}")));
    }
    Ok(())
}

/// `Σ_k w_k·[Φ((z+½−μ_k)/σ_k) − Φ((z−½−μ_k)/σ_k)]`.
pub fn gmm_integer_pmf(symbol: i32, w: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64, CoderError> {
    check_mixture(w, mu, sigma)?;
    Ok(pmf_unchecked(symbol as f64, w, mu, sigma))
}

/// Same sum as [`gmm_integer_pmf`] at a real-valued point, without validation.
/// Accumulates components in order from zero, like the training graph does.
#[inline]
pub fn pmf_unchecked(x: f64, w: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    let mut p = 0.0;
    for k in 0..w.len() {
        p += w[k] * bin_mass(x, mu[k], sigma[k]);
    }
    p
}

/// Mixture mass on `[lo, hi]`; either edge may be infinite.
pub(crate) fn interval_mass(lo: f64, hi: f64, w: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    let mut p = 0.0;
    for k in 0..w.len() {
        p += w[k] * normal_interval((lo - mu[k]) / sigma[k], (hi - mu[k]) / sigma[k]);
    }
    p
}

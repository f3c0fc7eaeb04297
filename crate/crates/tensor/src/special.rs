//! Standard-normal helpers shared by the differentiable rate term and the entropy coder.
//!
//! All transcendental calls go through `libm` so results are identical across
//! platforms; the coder's probability tables depend on that.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF, `Φ(x) = ½·erfc(−x/√2)`.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / (2.0 * PI).sqrt()
}

/// `Φ(hi) − Φ(lo)` for `lo ≤ hi`, evaluated in whichever tail keeps precision.
#[inline]
pub fn normal_interval(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        normal_cdf(-lo) - normal_cdf(-hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    }
}

/// Probability that `N(mean, std²)` lands in the unit bin centered on `x`.
#[inline]
pub fn bin_mass(x: f64, mean: f64, std: f64) -> f64 {
    let d = x - mean;
    normal_interval((d - 0.5) / std, (d + 0.5) / std)
}

/// Partial derivatives of [`bin_mass`] with respect to `(x, mean, std)`.
#[inline]
pub fn bin_mass_grad(x: f64, mean: f64, std: f64) -> (f64, f64, f64) {
    let d = x - mean;
    let (lo, hi) = ((d - 0.5) / std, (d + 0.5) / std);
    let (p_lo, p_hi) = (normal_pdf(lo), normal_pdf(hi));
    let dx = (p_hi - p_lo) / std;
    let dstd = -(p_hi * hi - p_lo * lo) / std;
    (dx, -dx, dstd)
}

/// Numerically stable `ln(1 + eˣ)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_at_zero() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(softplus(-30.0) > 0.0);
        assert_eq!(softplus(800.0), 800.0);
    }

    #[test]
    fn cdf_symmetry() {
        for &x in &[0.0, 0.3, 1.7, 5.0, 9.5] {
            assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(normal_cdf(0.0), 0.5);
    }

    #[test]
    fn bin_mass_gradient_matches_differences() {
        let h = 1e-6;
        for &(x, m, s) in &[(0.0, 0.3, 0.7), (2.0, -1.0, 1.5), (-3.0, 0.2, 0.05), (1.0, 1.4, 4.0)] {
            let (gx, gm, gs) = bin_mass_grad(x, m, s);
            let nx = (bin_mass(x + h, m, s) - bin_mass(x - h, m, s)) / (2.0 * h);
            let nm = (bin_mass(x, m + h, s) - bin_mass(x, m - h, s)) / (2.0 * h);
            let ns = (bin_mass(x, m, s + h) - bin_mass(x, m, s - h)) / (2.0 * h);
            assert!((gx - nx).abs() < 1e-7 && (gm - nm).abs() < 1e-7 && (gs - ns).abs() < 1e-7);
        }
    }
}

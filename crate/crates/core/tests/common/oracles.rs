//! Reference implementations that share no code with the crates under test.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `∫_a^b φ(t) dt` by composite 12-point Gauss–Legendre on panels of width ≤ 1/8.
/// The integrand is negligible beyond |t| = 40.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    let (lo, hi) = (a.max(-40.0), b.min(40.0));
    if lo >= hi {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(12);
    let panels = ((hi - lo) * 8.0).ceil().max(1.0) as usize;
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let (pa, pb) = (lo + p as f64 * width, lo + (p + 1) as f64 * width);
        let (mid, half) = ((pa + pb) / 2.0, (pb - pa) / 2.0);
        for (x, w) in nodes.iter().zip(&weights) {
            let t = mid + half * x;
            total += half * w * (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        }
    }
    total
}

/// Discretized mixture probability of integer `z` via quadrature.
pub fn pmf_oracle(z: i32, w: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    (0..w.len())
        .map(|k| {
            let a = (z as f64 - 0.5 - mu[k]) / sigma[k];
            let b = (z as f64 + 0.5 - mu[k]) / sigma[k];
            w[k] * normal_mass(a, b)
        })
        .sum()
}

/// PSNR from raw `[0, 1]` samples, computed as `20·log10(255) − 10·log10(MSE)`.
pub fn psnr_oracle(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let mut sse = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a * 255.0 - b * 255.0;
        sse += d * d;
    }
    let mse = sse / x.len() as f64;
    if mse == 0.0 {
        100.0
    } else {
        (20.0 * 255f64.log10() - 10.0 * mse.log10()).min(100.0)
    }
}

/// Rounds half away from zero via an exact integer/fraction split.
pub fn round_oracle(v: f64) -> f64 {
    let t = v.trunc();
    if (v - t).abs() >= 0.5 {
        t + v.signum()
    } else {
        t
    }
}

//! Standard normal helpers shared by the closed forms and the quadrature engine.

use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::FRAC_1_SQRT_2;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Φ(z), accurate in the lower tail.
#[inline]
pub fn cdf(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    if z == f64::INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// 1 − Φ(z), accurate in the upper tail.
#[inline]
pub fn sf(z: f64) -> f64 {
    cdf(-z)
}

/// Φ⁻¹(p).
pub fn quantile(p: f64) -> f64 {
    let mut z = Normal::standard().inverse_cdf(p);
    if z.is_finite() {
        // polish against our own cdf so the pair round-trips tightly
        for _ in 0..3 {
            let d = pdf(z);
            if d == 0.0 {
                break;
            }
            z -= (cdf(z) - p) / d;
        }
    }
    z
}

/// E[(X − a)₊] for X ~ N(0, σ²).
pub fn partial_expectation(a: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return (-a).max(0.0);
    }
    let z = a / sigma;
    sigma * pdf(z) - a * sf(z)
}

/// Nodes and weights for E[f(Z)], Z ~ N(0,1), by the trapezoid rule on ±8.
///
/// The trapezoid rule is spectrally accurate for Gaussian-weighted smooth
/// integrands, so a uniform grid is all that is needed here.
pub fn gaussian_nodes(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 3);
    let half = 8.0;
    let h = 2.0 * half / (n - 1) as f64;
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let z = -half + h * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            (z, w * h * pdf(z))
        })
        .collect();
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    for node in &mut out {
        node.1 /= total;
    }
    out
}

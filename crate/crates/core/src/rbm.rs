//! Continuous-time approximation of storage operation by a reflected Brownian motion
//! on `[0, B]`.

use crate::error::{Result, RldError};
use serde::{Deserialize, Serialize};

/// Below this magnitude `h` and `h′` are evaluated from their Taylor series.
pub const SERIES_SWITCH: f64 = 0.5;

// Taylor coefficients of x/(e^x − 1) in powers of x^2 beyond the linear term:
// B_{2n}/(2n)! for n = 1..=6.
const H_EVEN: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
];

/// `h(x) = x/(e^x − 1)`, with `h(0) = 1`.
pub fn h_func(x: f64) -> f64 {
    if x.abs() < SERIES_SWITCH {
        let x2 = x * x;
        let mut acc = 0.0;
        for c in H_EVEN.iter().rev() {
            acc = acc * x2 + c;
        }
        1.0 - 0.5 * x + acc * x2
    } else if x > 0.0 {
        // e^x may overflow; x·e^{−x}/(1 − e^{−x}) does not
        let em = (-x).exp();
        x * em / -(-x).exp_m1()
    } else {
        x / x.exp_m1()
    }
}

/// Derivative of [`h_func`], with `h′(0) = −1/2`.
pub fn h_prime(x: f64) -> f64 {
    if x.abs() < SERIES_SWITCH {
        let x2 = x * x;
        let mut acc = 0.0;
        for (n, c) in H_EVEN.iter().enumerate().rev() {
            acc = acc * x2 + c * (2 * n + 2) as f64;
        }
        -0.5 + acc * x
    } else if x > 0.0 {
        let em = (-x).exp();
        let d = -(-x).exp_m1();
        em * (d - x) / (d * d)
    } else {
        let d = x.exp_m1();
        (d - x * x.exp()) / (d * d)
    }
}

/// Drift, volatility and barrier of a reflected Brownian motion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub drift: f64,
    pub volatility: f64,
    pub barrier: f64,
}

impl RbmParams {
    pub fn new(drift: f64, volatility: f64, barrier: f64) -> Result<Self> {
        if !(volatility > 0.0) || !volatility.is_finite() {
            return Err(RldError::validation("sigma", "volatility must be positive"));
        }
        if !(barrier > 0.0) || !barrier.is_finite() {
            return Err(RldError::validation("B", "barrier must be positive"));
        }
        if !drift.is_finite() {
            return Err(RldError::validation("mu", "drift must be finite"));
        }
        Ok(Self {
            drift,
            volatility,
            barrier,
        })
    }

    fn scale(&self) -> f64 {
        self.volatility * self.volatility / (2.0 * self.barrier)
    }
}

/// Long-run rates of the lower push `V` and upper push `Q` (the latter nonpositive).
pub fn rbm_long_run(p: &RbmParams) -> (f64, f64) {
    let scale = p.scale();
    let a = p.drift / scale;
    (scale * h_func(a), -scale * h_func(-a))
}

/// Stationary density of the reflected motion on `[0, B]`.
pub fn rbm_density(z: f64, p: &RbmParams) -> f64 {
    if !(0.0..=p.barrier).contains(&z) {
        return 0.0;
    }
    let theta = 2.0 * p.drift / (p.volatility * p.volatility);
    let b = p.barrier;
    if theta > 0.0 {
        (theta * (z - b)).exp() * h_func(-theta * b) / b
    } else {
        (theta * z).exp() * h_func(theta * b) / b
    }
}

/// `(cost, derivative in x_total)` of the steady-state approximation of the delivery
/// cost, for total purchase `x_total` against predicted total deficit `d_hat_total`.
pub fn ct_terminal(
    x_total: f64,
    d_hat_total: f64,
    sigma2: f64,
    capacity: f64,
    voll: f64,
) -> (f64, f64) {
    debug_assert!(capacity > 0.0 && sigma2 > 0.0);
    // ratio first, so that scaling B and σ² together leaves every later operation unchanged
    let kappa = capacity / sigma2;
    let arg = 2.0 * kappa * (x_total - d_hat_total);
    (voll * h_func(arg) / (2.0 * kappa), voll * h_prime(arg))
}

pub fn ct_terminal_cost(
    x_total: f64,
    d_hat_total: f64,
    sigma2: f64,
    capacity: f64,
    voll: f64,
) -> f64 {
    ct_terminal(x_total, d_hat_total, sigma2, capacity, voll).0
}

pub fn ct_terminal_subgradient(
    x_total: f64,
    d_hat_total: f64,
    sigma2: f64,
    capacity: f64,
    voll: f64,
) -> f64 {
    ct_terminal(x_total, d_hat_total, sigma2, capacity, voll).1
}

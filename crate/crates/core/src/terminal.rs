//! Tabulated derivative of the expected delivery cost in offset coordinates.
//!
//! All engines are shift-equivariant: moving every predicted deficit by the same amount
//! moves the cost-to-go by the same amount in `x_{R+1}`. So a single curve
//! `G(y) = ∇J(D̂_total + y)` serves every forecast, and the last-stage mean error is
//! folded in by convolution.

use crate::error::{Result, RldError};
use crate::lattice::lattice_terminal;
use crate::model::ForecastModel;
use crate::model::StorageSpec;
use crate::normal::gaussian_nodes;
use crate::rbm::h_prime;
use crate::storage::depth_weighted_shortfall;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which model of the delivery interval drives the terminal cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engine {
    /// Exact discrete-time lattice.
    #[serde(rename = "lattice")]
    Lattice,
    /// Monte Carlo average of the per-path subgradient estimator.
    #[serde(rename = "mc")]
    Mc,
    /// Reflected Brownian motion approximation.
    #[serde(rename = "ct")]
    Ct,
}

impl Engine {
    pub fn tag(&self) -> &'static str {
        match self {
            Engine::Lattice => "lattice",
            Engine::Mc => "mc",
            Engine::Ct => "ct",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Engine {
    type Err = RldError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lattice" => Ok(Engine::Lattice),
            "mc" => Ok(Engine::Mc),
            "ct" => Ok(Engine::Ct),
            other => Err(RldError::validation(
                "engine",
                format!("unknown engine `{other}` (expected lattice, mc or ct)"),
            )),
        }
    }
}

/// Monotone piecewise-cubic (Fritsch–Carlson) interpolant, held constant outside the knots.
#[derive(Clone, Debug, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len());
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if s[i - 1] * s[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
            }
        }
        let end = |h0: f64, h1: f64, s0: f64, s1: f64| {
            let mut v = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
            if v * s0 <= 0.0 {
                v = 0.0;
            } else if s0 * s1 <= 0.0 && v.abs() > 3.0 * s0.abs() {
                v = 3.0 * s0;
            }
            v
        };
        if n == 2 {
            d[0] = s[0];
            d[1] = s[0];
        } else {
            d[0] = end(h[0], h[1], s[0], s[1]);
            d[n - 1] = end(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
        }
        Self { x, y, d }
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
}

/// `G̃(y)`: derivative of the expected delivery cost with respect to `x_{R+1}` at
/// offset `y = x_{R+1} − D̂_total` from the last-stage forecast, averaged over the
/// mean error still to be revealed.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminalCurve {
    pub engine: Engine,
    pub voll: f64,
    table: Pchip,
}

impl TerminalCurve {
    pub fn eval(&self, y: f64) -> f64 {
        self.table.eval(y)
    }

    pub fn knots(&self) -> &[f64] {
        self.table.knots()
    }

    /// Wraps a ready table.
    pub fn from_table(engine: Engine, voll: f64, table: Pchip) -> Self {
        Self {
            engine,
            voll,
            table,
        }
    }
}

/// Settings for building terminal curves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerminalConfig {
    /// Absolute interpolation tolerance as a fraction of the VOLL.
    pub rel_tol: f64,
    pub initial_knots: usize,
    pub max_knots: usize,
    /// Uniform knots of the smoothed table.
    pub smooth_knots: usize,
    /// Quadrature nodes for the mean-error convolution.
    pub mean_error_nodes: usize,
    /// Paths and grid size for the Monte Carlo engine.
    pub mc_paths: usize,
    pub mc_grid: usize,
    pub mc_seed: u64,
}

impl Default for TerminalConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-5,
            initial_knots: 33,
            max_knots: 4097,
            smooth_knots: 2049,
            mean_error_nodes: 201,
            mc_paths: 20_000,
            mc_grid: 513,
            mc_seed: 0x5eed,
        }
    }
}

/// Offset range outside which the curve is flat to within rounding.
fn offset_range(forecast: &ForecastModel, mean_error_std: f64) -> f64 {
    let within = forecast.total_variance().sqrt() * (forecast.stages() as f64).sqrt();
    let r = 8.0 * (within + mean_error_std);
    if r > 0.0 {
        r
    } else {
        1e-6
    }
}

/// Tabulates `f` on `[lo, hi]`, inserting midpoints until the interpolant predicts
/// every tested midpoint within `tol`.
pub fn adaptive_table<F>(f: F, lo: f64, hi: f64, tol: f64, initial: usize, max: usize) -> Pchip
where
    F: Fn(f64) -> f64 + Sync,
{
    let n0 = initial.max(3);
    let mut xs: Vec<f64> = (0..n0)
        .map(|i| lo + (hi - lo) * i as f64 / (n0 - 1) as f64)
        .collect();
    let mut ys: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect();
    // midpoint values already computed, keyed by bit pattern
    let mut probes: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    while xs.len() < max {
        let interp = Pchip::new(xs.clone(), ys.clone());
        let mids: Vec<f64> = xs.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let fresh: Vec<f64> = mids
            .iter()
            .copied()
            .filter(|m| !probes.contains_key(&m.to_bits()))
            .collect();
        let vals: Vec<f64> = fresh.par_iter().map(|&m| f(m)).collect();
        for (m, v) in fresh.iter().zip(vals) {
            probes.insert(m.to_bits(), v);
        }
        let mut add: Vec<(f64, f64)> = mids
            .iter()
            .map(|m| (*m, probes[&m.to_bits()]))
            .filter(|(m, v)| (interp.eval(*m) - v).abs() > tol)
            .collect();
        if add.is_empty() {
            break;
        }
        add.truncate(max - xs.len());
        let mut merged: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        merged.extend(add);
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        xs = merged.iter().map(|p| p.0).collect();
        ys = merged.iter().map(|p| p.1).collect();
    }
    Pchip::new(xs, ys)
}

/// Convolves a raw curve with an independent `N(0, mean_error_std²)` shift.
fn smooth(raw: &Pchip, mean_error_std: f64, lo: f64, hi: f64, cfg: &TerminalConfig) -> Pchip {
    if mean_error_std <= 0.0 {
        return raw.clone();
    }
    let nodes = gaussian_nodes(cfg.mean_error_nodes);
    let lo = lo - 8.0 * mean_error_std;
    let hi = hi + 8.0 * mean_error_std;
    let n = cfg.smooth_knots.max(3);
    let xs: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs
        .par_iter()
        .map(|&y| {
            nodes
                .iter()
                .map(|&(z, w)| w * raw.eval(y - mean_error_std * z))
                .sum()
        })
        .collect();
    Pchip::new(xs, ys)
}

/// Exact lattice curve for ideal storage.
pub fn lattice_curve(
    forecast: &ForecastModel,
    capacity: f64,
    voll: f64,
    mean_error_std: f64,
    cfg: &TerminalConfig,
) -> TerminalCurve {
    let base = forecast.total_mean();
    let r = offset_range(forecast, 0.0);
    let raw = adaptive_table(
        |y| lattice_terminal(base + y, forecast, capacity, voll).1,
        -r,
        r,
        cfg.rel_tol * voll,
        cfg.initial_knots,
        cfg.max_knots,
    );
    TerminalCurve::from_table(
        Engine::Lattice,
        voll,
        smooth(&raw, mean_error_std, -r, r, cfg),
    )
}

/// Reflected Brownian motion curve `c·h′(2B y/σ²)`.
pub fn ct_curve(
    within_variance: f64,
    capacity: f64,
    voll: f64,
    mean_error_std: f64,
    cfg: &TerminalConfig,
) -> Result<TerminalCurve> {
    if !(capacity > 0.0) || !(within_variance > 0.0) {
        return Err(RldError::Unsupported(
            "continuous-time approximation needs B > 0 and a positive delivery variance".into(),
        ));
    }
    let kappa = capacity / within_variance;
    // h′ is within 1e-12 of its limits once |2κy| > 35
    let r = (40.0 / (2.0 * kappa)).max(8.0 * within_variance.sqrt());
    let raw = adaptive_table(
        |y| voll * h_prime(2.0 * kappa * y),
        -r,
        r,
        cfg.rel_tol * voll,
        cfg.initial_knots,
        cfg.max_knots,
    );
    Ok(TerminalCurve::from_table(
        Engine::Ct,
        voll,
        smooth(&raw, mean_error_std, -r, r, cfg),
    ))
}

/// Monte Carlo curve from the per-path estimator, with one set of sampled delivery paths
/// shared by every grid point.
pub fn mc_curve(
    forecast: &ForecastModel,
    storage: &StorageSpec,
    voll: f64,
    mean_error_std: f64,
    cfg: &TerminalConfig,
) -> TerminalCurve {
    let t = forecast.stages();
    let r = offset_range(forecast, 0.0);
    let n = cfg.mc_grid.max(3);
    let ys: Vec<f64> = (0..n)
        .map(|i| -r + 2.0 * r * i as f64 / (n - 1) as f64)
        .collect();
    let base = forecast.total_mean();
    let paths = cfg.mc_paths.max(1);
    // path p is drawn from its own stream so the estimate does not depend on threading
    let sums: Vec<f64> = (0..paths)
        .into_par_iter()
        .fold(
            || vec![0.0; n],
            |mut acc, p| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.mc_seed);
                rng.set_stream(p as u64);
                let deficits: Vec<f64> = forecast
                    .d_hat()
                    .iter()
                    .zip(forecast.sigma())
                    .map(|(&d, &s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        d + s * z
                    })
                    .collect();
                for (k, &y) in ys.iter().enumerate() {
                    let x = (base + y) / t as f64;
                    acc[k] += depth_weighted_shortfall(&deficits, x, storage).0;
                }
                acc
            },
        )
        .reduce(
            || vec![0.0; n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let vals: Vec<f64> = sums
        .iter()
        .map(|s| -(voll / t as f64) * s / paths as f64)
        .collect();
    let raw = Pchip::new(ys, vals);
    TerminalCurve::from_table(Engine::Mc, voll, smooth(&raw, mean_error_std, -r, r, cfg))
}

//! Threshold schedules and the policies that use them.

use crate::error::{Result, RldError};
use crate::model::{Direction, ForecastErrorCurve, ForecastModel, MarketLadder, StorageSpec};
use crate::normal::{cdf, gaussian_nodes, pdf};
use crate::scenario::Scenario;
use crate::storage::{delivery_cost, depth_weighted_shortfall};
use crate::terminal::{ct_curve, lattice_curve, mc_curve, Engine, TerminalConfig, TerminalCurve};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;

/// Purchase at one stage: buy up to the threshold, or sell down to it.
pub fn dispatch_decision(x: f64, psi: f64, direction: Direction) -> f64 {
    match direction {
        Direction::Buy => (psi - x).max(0.0),
        Direction::Sell => (psi - x).min(0.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageRoot {
    pub psi: f64,
    /// `c_r + subgradient(ψ)`.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `c_r + g(ψ) = 0` for a nondecreasing `g` by bracketing outward from `center`
/// and then bisecting until the residual is below `1e-6·voll`.
pub fn solve_stage_threshold<G>(
    price: f64,
    subgradient: G,
    center: f64,
    scale: f64,
    voll: f64,
) -> Result<StageRoot>
where
    G: Fn(f64) -> f64,
{
    if !(price > 0.0 && price < voll) {
        return Err(RldError::DegeneratePrice(format!(
            "stage price {price} must lie strictly between 0 and VOLL {voll}"
        )));
    }
    let resid = |x: f64| price + subgradient(x);
    solve_decreasing_root(|x| -resid(x), center, scale, 1e-6 * voll).map(|(psi, r, it)| StageRoot {
        psi,
        residual: -r,
        iterations: it,
    })
}

/// Root of a nonincreasing function by outward bracketing and bisection. Returns the root,
/// the function value there, and the iteration count.
fn solve_decreasing_root<F>(f: F, center: f64, scale: f64, tol: f64) -> Result<(f64, f64, usize)>
where
    F: Fn(f64) -> f64,
{
    let mut half = if scale > 0.0 && scale.is_finite() {
        scale
    } else {
        1.0
    };
    let mut lo = center - half;
    let mut hi = center + half;
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    let mut iterations = 2;
    while !(f_lo >= 0.0 && f_hi <= 0.0) {
        if iterations > 200 {
            return Err(RldError::DegeneratePrice(format!(
                "no sign change found in [{lo}, {hi}] (values {f_lo}, {f_hi})"
            )));
        }
        half *= 2.0;
        if f_lo < 0.0 {
            lo = center - half;
            f_lo = f(lo);
        }
        if f_hi > 0.0 {
            hi = center + half;
            f_hi = f(hi);
        }
        iterations += 1;
    }
    if f_lo.abs() <= tol && f_lo.abs() <= f_hi.abs() {
        return Ok((lo, f_lo, iterations));
    }
    if f_hi.abs() <= tol {
        return Ok((hi, f_hi, iterations));
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        iterations += 1;
        if fm.abs() <= tol || hi - lo <= 1e-13 * (1.0 + mid.abs()) || mid == lo || mid == hi {
            return Ok((mid, fm, iterations));
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// How a schedule was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ScheduleKind {
    Engine(Engine),
    ThreeSigma,
}

impl ScheduleKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ScheduleKind::Engine(e) => e.tag(),
            ScheduleKind::ThreeSigma => "3sigma",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageThreshold {
    pub stage: usize,
    pub lead_time_hours: f64,
    pub price: f64,
    pub direction: Direction,
    /// Offset from the stage forecast of the total deficit.
    pub delta: f64,
    /// Threshold on the accumulated position under the initial forecast.
    pub threshold: f64,
    /// Optimality-equation residual; zero for rule-based entries.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdSchedule {
    pub kind: ScheduleKind,
    pub stages: Vec<StageThreshold>,
}

impl ThresholdSchedule {
    pub fn deltas(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.delta).collect()
    }

    /// Writes `stage,lead_time,price,threshold,engine,residual`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| RldError::Domain(format!("threshold table: {e}"));
        w.write_record([
            "stage",
            "lead_time",
            "price",
            "threshold",
            "engine",
            "residual",
        ])
        .map_err(err)?;
        for s in &self.stages {
            w.write_record([
                s.stage.to_string(),
                s.lead_time_hours.to_string(),
                s.price.to_string(),
                s.threshold.to_string(),
                self.kind.tag().to_string(),
                s.residual.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()
            .map_err(|e| RldError::Domain(format!("threshold table: {e}")))?;
        Ok(())
    }
}

/// Settings for the backward threshold recursion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub terminal: TerminalConfig,
    /// Outer quadrature nodes when one future increment remains after the next.
    pub outer_nodes: usize,
    /// Simpson nodes for the integral over the next increment.
    pub inner_nodes: usize,
    /// Samples (antithetic pairs count twice) when more future increments remain.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            terminal: TerminalConfig::default(),
            outer_nodes: 201,
            inner_nodes: 1025,
            mc_samples: 200_000,
            seed: 0x7e57,
        }
    }
}

/// A future stage in the nested optimality equation.
#[derive(Clone, Copy, Debug)]
struct Later {
    direction: Direction,
    price: f64,
    delta: f64,
}

/// One realization of the increments after the next one, with its weight.
struct Outer {
    weight: f64,
    /// Cumulative increments from stage r+2 up to each later stage; entry 0 is 0.
    cum: Vec<f64>,
    /// Standard normal for the next increment when it is sampled jointly.
    z_next: Option<f64>,
}

fn outer_samples(first_std: f64, rest: &[f64], cfg: &SolverConfig, stage: usize) -> Vec<Outer> {
    let cum_of = |e: &[f64]| {
        let mut cum = vec![0.0];
        let mut acc = 0.0;
        for v in e {
            acc += v;
            cum.push(acc);
        }
        cum
    };
    let random: Vec<usize> = (0..rest.len()).filter(|&i| rest[i] > 0.0).collect();
    match random.len() {
        0 => vec![Outer {
            weight: 1.0,
            cum: cum_of(&vec![0.0; rest.len()]),
            z_next: None,
        }],
        1 => {
            let i = random[0];
            gaussian_nodes(cfg.outer_nodes)
                .into_iter()
                .map(|(z, w)| {
                    let mut e = vec![0.0; rest.len()];
                    e[i] = rest[i] * z;
                    Outer {
                        weight: w,
                        cum: cum_of(&e),
                        z_next: None,
                    }
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stage as u64);
            let pairs = (cfg.mc_samples / 2).max(1);
            let w = 1.0 / (2 * pairs) as f64;
            let mut out = Vec::with_capacity(2 * pairs);
            for _ in 0..pairs {
                let z: Vec<f64> = (0..rest.len())
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                let zn: f64 = StandardNormal.sample(&mut rng);
                for sign in [1.0, -1.0] {
                    let e: Vec<f64> = z.iter().zip(rest).map(|(z, s)| sign * z * s).collect();
                    out.push(Outer {
                        weight: w,
                        cum: cum_of(&e),
                        z_next: (first_std > 0.0).then_some(sign * zn),
                    });
                }
            }
            out
        }
    }
}

struct Nested<'a> {
    later: Vec<Later>,
    /// Std of the increment revealed at stage r+1.
    s: f64,
    outers: Vec<Outer>,
    terminal: &'a TerminalCurve,
    inner_nodes: usize,
}

impl Nested<'_> {
    /// Expected marginal saving of one more unit bought at stage r when the position
    /// after stage r sits `delta` above the stage-r forecast.
    fn rhs(&self, delta: f64) -> f64 {
        let chunk = 1024;
        let parts: Vec<f64> = self
            .outers
            .par_chunks(chunk)
            .map(|c| {
                c.iter()
                    .map(|o| o.weight * self.rhs_one(delta, o))
                    .sum::<f64>()
            })
            .collect();
        parts.iter().sum()
    }

    fn rhs_one(&self, delta: f64, o: &Outer) -> f64 {
        let s = self.s;
        let eta = *o.cum.last().unwrap();
        let f = |w: f64| -self.terminal.eval(w - eta);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        if s == 0.0 {
            let w = delta;
            for (j, l) in self.later.iter().enumerate() {
                let a = l.delta + o.cum[j];
                let active = match l.direction {
                    Direction::Buy => w < a,
                    Direction::Sell => w > a,
                };
                if active {
                    return l.price;
                }
            }
            return f(w);
        }
        let prob = |a: f64, b: f64| {
            if !(a < b) {
                0.0
            } else {
                cdf((b - delta) / s) - cdf((a - delta) / s)
            }
        };
        let mut total = 0.0;
        for (j, l) in self.later.iter().enumerate() {
            if !(lo < hi) {
                return total;
            }
            let a = l.delta + o.cum[j];
            match l.direction {
                Direction::Buy => {
                    total += l.price * prob(lo, hi.min(a));
                    lo = lo.max(a);
                }
                Direction::Sell => {
                    total += l.price * prob(lo.max(a), hi);
                    hi = hi.min(a);
                }
            }
        }
        if !(lo < hi) {
            return total;
        }
        match o.z_next {
            None => total + self.terminal_quadrature(delta, lo, hi, &f),
            Some(z) => total + self.terminal_sampled(delta, lo, hi, delta - s * z, &f),
        }
    }

    /// `E[1{lo<w<hi} f(w)]` for `w ~ N(delta, s²)` by Simpson's rule on the clipped range.
    fn terminal_quadrature(&self, delta: f64, lo: f64, hi: f64, f: &dyn Fn(f64) -> f64) -> f64 {
        let s = self.s;
        let a = lo.max(delta - 8.0 * s);
        let b = hi.min(delta + 8.0 * s);
        if !(a < b) {
            return 0.0;
        }
        let n = self.inner_nodes | 1;
        let h = (b - a) / (n - 1) as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let w = a + h * i as f64;
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += c * f(w) * pdf((w - delta) / s);
        }
        acc * h / (3.0 * s)
    }

    /// Same expectation from one joint sample: the linear interpolant of `f` across the
    /// region is integrated exactly and only the remainder is sampled. The remainder
    /// vanishes at finite region ends, so the estimate is continuous in `delta`.
    fn terminal_sampled(
        &self,
        delta: f64,
        lo: f64,
        hi: f64,
        w: f64,
        f: &dyn Fn(f64) -> f64,
    ) -> f64 {
        let s = self.s;
        let (alpha, beta) = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => {
                let (fl, fh) = (f(lo), f(hi));
                let beta = (fh - fl) / (hi - lo);
                (fl - beta * lo, beta)
            }
            (true, false) => (f(lo), 0.0),
            (false, true) => (f(hi), 0.0),
            (false, false) => (0.0, 0.0),
        };
        let (zl, zh) = ((lo - delta) / s, (hi - delta) / s);
        let p = cdf(zh) - cdf(zl);
        let first = delta * p + s * (pdf(zl) - pdf(zh));
        let analytic = alpha * p + beta * first;
        let correction = if lo < w && w < hi {
            f(w) - (alpha + beta * w)
        } else {
            0.0
        };
        analytic + correction
    }
}

/// Backward recursion for the offsets `Δ_r` given the increment stds of stages
/// `2..=R` and a terminal curve. Returns `(Δ_r, residual, iterations)` per stage.
pub fn solve_offsets(
    ladder: &MarketLadder,
    increment_stds: &[f64],
    terminal: &TerminalCurve,
    scale: f64,
    cfg: &SolverConfig,
) -> Result<Vec<(f64, f64, usize)>> {
    let r_len = ladder.len();
    if increment_stds.len() + 1 != r_len {
        return Err(RldError::validation(
            "increment_stds",
            format!(
                "expected {} entries, got {}",
                r_len - 1,
                increment_stds.len()
            ),
        ));
    }
    let voll = terminal.voll;
    let mut out = vec![(0.0, 0.0, 0); r_len];
    let last = ladder.stage(r_len);
    let root = solve_stage_threshold(last.price, |y| terminal.eval(y), 0.0, scale, voll)?;
    out[r_len - 1] = (root.psi, root.residual, root.iterations);
    for r in (1..r_len).rev() {
        let stage = ladder.stage(r);
        let later: Vec<Later> = (r + 1..=r_len)
            .map(|j| Later {
                direction: ladder.stage(j).direction,
                price: ladder.stage(j).price,
                delta: out[j - 1].0,
            })
            .collect();
        // increment revealed at stage j has index j-2
        let s = increment_stds[r - 1];
        let rest = &increment_stds[r..];
        let nested = Nested {
            later,
            s,
            outers: outer_samples(s, rest, cfg, r),
            terminal,
            inner_nodes: cfg.inner_nodes,
        };
        let remaining = (s * s + rest.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let (delta, value, it) = solve_decreasing_root(
            |d| nested.rhs(d) - stage.price,
            out[r].0,
            remaining.max(scale),
            1e-6 * voll,
        )
        .map_err(|e| match e {
            RldError::DegeneratePrice(m) => RldError::DegeneratePrice(format!("stage {r}: {m}")),
            other => other,
        })?;
        out[r - 1] = (delta, value, it);
    }
    Ok(out)
}

fn terminal_for(scenario: &Scenario, engine: Engine, cfg: &SolverConfig) -> Result<TerminalCurve> {
    let forecast = scenario.forecast();
    let dv = scenario.delivery_variance();
    let m = dv.mean_error.sqrt();
    let voll = scenario.cost.voll;
    match engine {
        Engine::Lattice => {
            if !scenario.storage.is_ideal() {
                return Err(RldError::Unsupported(
                    "lattice engine requires ideal storage efficiencies".into(),
                ));
            }
            Ok(lattice_curve(
                &forecast,
                scenario.storage.capacity,
                voll,
                m,
                &cfg.terminal,
            ))
        }
        Engine::Mc => Ok(mc_curve(
            &forecast,
            &scenario.storage,
            voll,
            m,
            &cfg.terminal,
        )),
        Engine::Ct => ct_curve(
            dv.within_interval,
            scenario.storage.capacity,
            voll,
            m,
            &cfg.terminal,
        ),
    }
}

/// Builds the terminal curve for a scenario and engine.
pub fn terminal_curve(
    scenario: &Scenario,
    engine: Engine,
    cfg: &SolverConfig,
) -> Result<TerminalCurve> {
    terminal_for(scenario, engine, cfg)
}

fn schedule_from_offsets(
    scenario: &Scenario,
    kind: ScheduleKind,
    offsets: &[(f64, f64, usize)],
) -> ThresholdSchedule {
    let base = scenario.total_mean();
    ThresholdSchedule {
        kind,
        stages: scenario
            .ladder
            .stages()
            .iter()
            .zip(offsets)
            .enumerate()
            .map(|(i, (s, &(delta, residual, iterations)))| StageThreshold {
                stage: i + 1,
                lead_time_hours: s.lead_time_hours,
                price: s.price,
                direction: s.direction,
                delta,
                threshold: base + delta,
                residual,
                iterations,
            })
            .collect(),
    }
}

/// Optimal (or approximately optimal, for `ct`) thresholds for every stage.
pub fn solve_thresholds_backward(
    scenario: &Scenario,
    engine: Engine,
    cfg: &SolverConfig,
) -> Result<ThresholdSchedule> {
    let terminal = terminal_for(scenario, engine, cfg)?;
    solve_with_terminal(scenario, &terminal, cfg)
}

/// Same as [`solve_thresholds_backward`] with a prebuilt terminal curve.
pub fn solve_with_terminal(
    scenario: &Scenario,
    terminal: &TerminalCurve,
    cfg: &SolverConfig,
) -> Result<ThresholdSchedule> {
    let dv = scenario.delivery_variance();
    let scale = (dv.mean_error + dv.within_interval).sqrt().max(1e-6);
    let offsets = solve_offsets(
        &scenario.ladder,
        &scenario.increment_stds(),
        terminal,
        scale,
        cfg,
    )?;
    Ok(schedule_from_offsets(
        scenario,
        ScheduleKind::Engine(terminal.engine),
        &offsets,
    ))
}

/// Continuous-time thresholds from explicit inputs: `increment_stds` for stages
/// `2..=R`, the mean-error std, and the within-interval variance `σ²_{R+1}`.
pub fn solve_ct_thresholds(
    ladder: &MarketLadder,
    increment_stds: &[f64],
    mean_error_std: f64,
    voll: f64,
    capacity: f64,
    within_variance: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let terminal = ct_curve(
        within_variance,
        capacity,
        voll,
        mean_error_std,
        &cfg.terminal,
    )?;
    let scale = (within_variance + mean_error_std * mean_error_std).sqrt();
    Ok(
        solve_offsets(ladder, increment_stds, &terminal, scale, cfg)?
            .into_iter()
            .map(|o| o.0)
            .collect(),
    )
}

/// `Δ_r = 3σ(t_r)`, with thresholds placed on the initial forecast.
pub fn three_sigma_schedule(
    curve: &ForecastErrorCurve,
    ladder: &MarketLadder,
    forecast: &ForecastModel,
) -> Result<ThresholdSchedule> {
    let base = forecast.total_mean();
    let mut stages = Vec::with_capacity(ladder.len());
    for (i, s) in ladder.stages().iter().enumerate() {
        let delta = 3.0 * curve.sigma_at(s.lead_time_hours)?;
        stages.push(StageThreshold {
            stage: i + 1,
            lead_time_hours: s.lead_time_hours,
            price: s.price,
            direction: s.direction,
            delta,
            threshold: base + delta,
            residual: 0.0,
            iterations: 0,
        });
    }
    Ok(ThresholdSchedule {
        kind: ScheduleKind::ThreeSigma,
        stages,
    })
}

/// Random inputs of one Monte Carlo run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunDraws {
    /// Forecast updates revealed at stages `2..=R`.
    pub increments: Vec<f64>,
    /// Shift of the interval total revealed after the last market.
    pub mean_error: f64,
    /// Independent per-stage delivery errors.
    pub stage_errors: Vec<f64>,
}

impl RunDraws {
    /// Draws run `run_index` of the stream keyed by `seed`. Draw order is fixed:
    /// increments, mean error, stage errors.
    pub fn sample(scenario: &Scenario, seed: u64, run_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run_index);
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        let increments = scenario.increment_stds().iter().map(|s| s * z()).collect();
        let mean_error = scenario.mean_error_std() * z();
        let sigma = scenario.stage_sigma();
        let stage_errors = (0..scenario.stages()).map(|_| sigma * z()).collect();
        Self {
            increments,
            mean_error,
            stage_errors,
        }
    }

    /// Realized per-stage deficits.
    pub fn deficits(&self, scenario: &Scenario) -> Vec<f64> {
        let t = scenario.stages() as f64;
        let shift = (self.increments.iter().sum::<f64>() + self.mean_error) / t;
        scenario
            .d_hat
            .iter()
            .zip(&self.stage_errors)
            .map(|(d, e)| d + shift + e)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyResult {
    pub purchases: Vec<f64>,
    pub x_final: f64,
    pub delivery_cost: f64,
    pub total_cost: f64,
}

/// Runs the stage sequence with forecast updates, then the delivery interval.
pub fn simulate_policy(
    schedule: &ThresholdSchedule,
    scenario: &Scenario,
    draws: &RunDraws,
) -> PolicyResult {
    let deficits = draws.deficits(scenario);
    simulate_policy_on(schedule, scenario, draws, &deficits)
}

pub(crate) fn simulate_policy_on(
    schedule: &ThresholdSchedule,
    scenario: &Scenario,
    draws: &RunDraws,
    deficits: &[f64],
) -> PolicyResult {
    let mut forecast = scenario.total_mean();
    let mut x = 0.0;
    let mut spend = 0.0;
    let mut purchases = Vec::with_capacity(schedule.stages.len());
    for (i, st) in schedule.stages.iter().enumerate() {
        if i > 0 {
            forecast += draws.increments[i - 1];
        }
        let s = dispatch_decision(x, forecast + st.delta, st.direction);
        purchases.push(s);
        spend += st.price * s;
        x += s;
    }
    let t = scenario.stages() as f64;
    let delivery = delivery_cost(deficits, x / t, &scenario.storage, scenario.cost.voll);
    PolicyResult {
        purchases,
        x_final: x,
        delivery_cost: delivery,
        total_cost: spend + delivery,
    }
}

/// Perfect-foresight cost: best constant per-stage supply `x ≥ x_min`, bought at price
/// `c_1`, with greedy storage. Returns `(x*, cost)` with `x*` per stage.
pub fn ideal_policy_cost(
    deficits: &[f64],
    storage: &StorageSpec,
    c1: f64,
    voll: f64,
    x_min: f64,
) -> (f64, f64) {
    let t = deficits.len() as f64;
    let cost = |x: f64| c1 * t * x + delivery_cost(deficits, x, storage, voll);
    let lo0 = deficits.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi0 = deficits.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let (mut lo, mut hi) = (lo0.max(x_min), hi0.max(x_min));
    let x = if storage.is_ideal() {
        let slope = |x: f64| c1 * t - voll * depth_weighted_shortfall(deficits, x, storage).0;
        if slope(lo) >= 0.0 {
            lo
        } else {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                if slope(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            // the minimum sits at a kink; take the better end of the final bracket
            if cost(lo) < cost(hi) {
                lo
            } else {
                hi
            }
        }
    } else {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if cost(a) <= cost(b) {
                hi = b;
            } else {
                lo = a;
            }
            if hi - lo <= 1e-14 * (1.0 + lo.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    (x, cost(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn decision_examples() {
        assert_eq!(dispatch_decision(3.0, 5.0, Direction::Buy), 2.0);
        assert_eq!(dispatch_decision(7.0, 5.0, Direction::Buy), 0.0);
        assert_eq!(dispatch_decision(7.0, 5.0, Direction::Sell), -2.0);
        assert_eq!(dispatch_decision(3.0, 5.0, Direction::Sell), 0.0);
    }

    #[test]
    fn newsvendor_root() {
        let (d, s, t) = (0.3, 0.1, 1.0);
        let g = |psi: f64| -1000.0 * (1.0 - cdf((psi / t - d) / s));
        let root = solve_stage_threshold(72.0, g, d * t, s, 1000.0).unwrap();
        assert_abs_diff_eq!(
            root.psi / t - d,
            s * crate::normal::quantile(0.928),
            epsilon = 1e-6
        );
        assert!(root.residual.abs() < 1e-3);
    }

    #[test]
    fn degenerate_prices_rejected() {
        let g = |_x: f64| -0.5;
        assert!(matches!(
            solve_stage_threshold(72.0, g, 0.0, 1.0, 1000.0),
            Err(RldError::DegeneratePrice(_))
        ));
        assert!(solve_stage_threshold(1000.0, |x: f64| x, 0.0, 1.0, 1000.0).is_err());
    }

    #[test]
    fn ideal_examples() {
        let s = StorageSpec::ideal(1.0);
        let (x, c) = ideal_policy_cost(&[-1.0, 3.0], &s, 52.0, 1000.0, f64::NEG_INFINITY);
        assert_abs_diff_eq!(x, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c, 208.0, epsilon = 1e-6);
        let (x, c) = ideal_policy_cost(&[0.4; 5], &s, 52.0, 1000.0, 0.0);
        assert_abs_diff_eq!(x, 0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(c, 52.0 * 5.0 * 0.4, epsilon = 1e-6);
    }

    #[test]
    fn ideal_lossy_matches_grid_search() {
        let s = StorageSpec::with_efficiencies(0.5, 0.95, 0.9, 0.85);
        let d = [0.2, -0.4, 0.9, 0.1, 0.6];
        let (x, c) = ideal_policy_cost(&d, &s, 52.0, 1000.0, f64::NEG_INFINITY);
        let mut best = f64::INFINITY;
        for i in 0..=20000 {
            let xg = -1.5 + i as f64 * 1e-4 * 1.5;
            best = best.min(52.0 * 5.0 * xg + delivery_cost(&d, xg, &s, 1000.0));
        }
        assert!(c <= best + 1e-6, "{x} {c} {best}");
    }
}

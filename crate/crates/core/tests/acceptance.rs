//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line; the binary exits
//! nonzero if any criterion fails.
//!
//! Runs without the libtest harness so the lines are visible under a plain
//! `cargo test`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rld_core::dispatch::{solve_with_terminal, terminal_curve};
use rld_core::harness::build_schedules;
use rld_core::lattice::build_lattice_with_laws;
use rld_core::walk::QuadratureConfig;
use rld_core::*;
use std::time::{Duration, Instant};

const VOLL: f64 = 1000.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn scenario() -> Scenario {
    load_scenario(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../data/scenario_default.json"
    ))
    .expect("shipped scenario loads")
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn c1_flow_balance() -> Outcome {
    let start = Instant::now();
    let mus = [-2.0, -1.0, -0.5, -0.1, -1e-3, 0.0, 1e-3, 0.1, 0.7, 2.0];
    let sigmas = log_grid(0.1, 2.0, 10);
    let caps = log_grid(0.01, 10.0, 10);
    let mut worst: f64 = 0.0;
    for &mu in &mus {
        for &s in &sigmas {
            for &b in &caps {
                let (v, q) = rbm_long_run(&RbmParams::new(mu, s, b).unwrap());
                worst = worst.max((mu + v + q).abs());
            }
        }
    }
    let took = start.elapsed();
    Outcome {
        pass: worst < 1e-12 && took < Duration::from_secs(1),
        detail: format!("max |mu + v + q| = {worst:.2e} over 1000 points in {took:.2?}"),
    }
}

/// Lower push accumulated by a reflected Gaussian walk on `[0, b]`. Within each step the
/// Brownian bridge extremes are sampled exactly, which removes the overshoot bias of
/// clipping only at the grid times.
fn reflected_walk_push(
    mu: f64,
    sigma: f64,
    b: f64,
    dt: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let sd = sigma * dt.sqrt();
    let mut z = 0.5 * b;
    let mut pushed = 0.0;
    for _ in 0..steps {
        let g: f64 = StandardNormal.sample(rng);
        let inc = mu * dt + sd * g;
        let end = z + inc;
        let e = -(1.0 - rng.random::<f64>()).ln();
        let spread = (inc * inc + 2.0 * sd * sd * e).sqrt();
        let low = 0.5 * (z + end - spread);
        let high = 0.5 * (z + end + spread);
        let mut lo_push = (-low).max(0.0);
        let hi_push = (high - b).max(0.0);
        let mut next = end + lo_push - hi_push;
        if next < 0.0 {
            lo_push -= next;
            next = 0.0;
        } else if next > b {
            next = b;
        }
        pushed += lo_push;
        z = next;
    }
    pushed
}

fn c2_rbm_simulation() -> Outcome {
    let start = Instant::now();
    let (dt, steps, paths) = (1e-3, 1_000_000, 64);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (k, (mu, s, b)) in [(0.0, 1.0, 1.0), (1.0, 1.0, 1.0), (-0.5, 2.0, 1.0)]
        .into_iter()
        .enumerate()
    {
        let (v_rate, _) = rbm_long_run(&RbmParams::new(mu, s, b).unwrap());
        let rates: Vec<f64> = (0..paths)
            .map(|p| {
                let mut rng = ChaCha8Rng::seed_from_u64(0xb0_0000 + k as u64);
                rng.set_stream(p);
                reflected_walk_push(mu, s, b, dt, steps, &mut rng) / (steps as f64 * dt)
            })
            .collect();
        let (m, se) = mean_se(&rates);
        let rel = (m / v_rate - 1.0).abs();
        worst = worst.max(rel);
        parts.push(format!(
            "({mu},{s},{b}): {m:.4} vs {v_rate:.4} (se {se:.4})"
        ));
    }
    let took = start.elapsed();
    Outcome {
        pass: worst < 0.02 && took < Duration::from_secs(30),
        detail: format!(
            "worst rel err {:.2}% in {took:.2?}; {}",
            worst * 100.0,
            parts.join(", ")
        ),
    }
}

/// Per-stage deficit and error std for the lattice-vs-oracle grid.
const GRID_D: f64 = 0.02;
const GRID_SIGMA: f64 = 0.01;

fn grid_points(t: usize) -> Vec<f64> {
    let centre = t as f64 * GRID_D;
    let sw = GRID_SIGMA * (t as f64).sqrt();
    (-2..=2).map(|k| centre + k as f64 * sw).collect()
}

fn c3_lattice_vs_mc() -> Outcome {
    let start = Instant::now();
    let n_paths = 100_000;
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for (ti, &t) in [2usize, 5, 10, 20].iter().enumerate() {
        let fc = ForecastModel::constant(t, GRID_D, GRID_SIGMA);
        let mut rng = ChaCha8Rng::seed_from_u64(0xc3 + ti as u64);
        let paths: Vec<Vec<f64>> = (0..n_paths)
            .map(|_| {
                (0..t)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        GRID_D + GRID_SIGMA * z
                    })
                    .collect()
            })
            .collect();
        for b in [0.001, 0.01] {
            let spec = StorageSpec::ideal(b);
            for x in grid_points(t) {
                let exact = lattice_terminal_cost(x, &fc, b, VOLL);
                let costs: Vec<f64> = paths
                    .iter()
                    .map(|d| simulate_delivery(d, x / t as f64, &spec, VOLL).cost)
                    .collect();
                let (m, se) = mean_se(&costs);
                worst = worst.max((exact - m).abs() / se);
                checks += 1;
            }
        }
    }
    let took = start.elapsed();
    Outcome {
        pass: worst <= 3.0 && took < Duration::from_secs(120),
        detail: format!("worst |lattice - mc| = {worst:.2} se over {checks} points in {took:.2?}"),
    }
}

fn c4_subgradient() -> Outcome {
    let delta = 1e-3;
    let mut worst: f64 = 0.0;
    let mut bounds_ok = true;
    let mut monotone_ok = true;
    for t in [2usize, 5, 10, 20] {
        let fc = ForecastModel::constant(t, GRID_D, GRID_SIGMA);
        for b in [0.001, 0.01] {
            let mut prev = f64::NEG_INFINITY;
            for x in grid_points(t) {
                let g = lattice_terminal_subgradient(x, &fc, b, VOLL);
                let fd = (lattice_terminal_cost(x + delta, &fc, b, VOLL)
                    - lattice_terminal_cost(x - delta, &fc, b, VOLL))
                    / (2.0 * delta);
                worst = worst.max(((g - fd) / fd).abs());
                bounds_ok &= (-VOLL..=0.0).contains(&g);
                monotone_ok &= g >= prev;
                prev = g;
            }
        }
    }
    Outcome {
        pass: worst < 1e-2 && bounds_ok && monotone_ok,
        detail: format!(
            "worst rel err vs central difference {worst:.2e}; bounds {bounds_ok}; monotone {monotone_ok}"
        ),
    }
}

/// `E[(D − x)^+]` for `D ~ N(d, s²)` by composite Simpson on `[x, d + 14 s]`.
fn shortfall_by_quadrature(d: f64, s: f64, x: f64) -> f64 {
    let lo = x.max(d - 14.0 * s);
    let hi = d + 14.0 * s;
    if lo >= hi {
        return 0.0;
    }
    let n = 200_001;
    let h = (hi - lo) / (n - 1) as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let y = lo + h * i as f64;
        let w = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let z = (y - d) / s;
        acc += w * (y - x) * (-0.5 * z * z).exp();
    }
    acc * h / 3.0 / (s * (2.0 * std::f64::consts::PI).sqrt())
}

fn c5_closed_form_b0() -> Outcome {
    let mut worst_limit: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for t in [1usize, 3, 10] {
        let fc = ForecastModel::constant(t, GRID_D, GRID_SIGMA);
        for k in [-2.0, -0.5, 0.0, 1.0, 2.5] {
            let x = t as f64 * (GRID_D + k * GRID_SIGMA);
            let (c0, g0) = closed_form_b0(x, &fc, VOLL);
            let (cl, gl) = lattice_terminal(x, &fc, 1e-6, VOLL);
            worst_limit = worst_limit
                .max(((cl - c0) / c0).abs())
                .max(((gl - g0) / g0).abs());
            let oracle =
                VOLL * t as f64 * shortfall_by_quadrature(GRID_D, GRID_SIGMA, x / t as f64);
            worst_oracle = worst_oracle.max(((c0 - oracle) / oracle).abs());
        }
    }
    Outcome {
        pass: worst_limit < 1e-3 && worst_oracle < 1e-10,
        detail: format!("B=1e-6 lattice rel err {worst_limit:.2e}; quadrature oracle rel err {worst_oracle:.2e}"),
    }
}

fn c6_brute_force() -> Outcome {
    let start = Instant::now();
    // binomial(8, 1/2) atoms centred at zero
    let binom = [1.0, 8.0, 28.0, 56.0, 70.0, 56.0, 28.0, 8.0, 1.0];
    let atoms: Vec<(f64, f64)> = binom
        .iter()
        .enumerate()
        .map(|(k, c)| ((k as f64 - 4.0) * 0.0071, c / 256.0))
        .collect();
    let d_hat = [0.013, 0.021, 0.017];
    let laws = vec![StepLaw::Atoms(atoms.clone()); 3];
    let mut worst: f64 = 0.0;
    for b in [0.004, 0.011, 0.05] {
        for x in [0.0093, 0.0173, 0.0254] {
            let lat =
                build_lattice_with_laws(&d_hat, &laws, b, x, &QuadratureConfig::default(), false)
                    .unwrap();
            let (mut cost, mut weighted) = (0.0, 0.0);
            for i in 0..9 {
                for j in 0..9 {
                    for k in 0..9 {
                        let idx = [i, j, k];
                        let p: f64 = idx.iter().map(|&a| atoms[a].1).product();
                        let mut stored = 0.0;
                        let mut depth = 0usize;
                        for (t, &a) in idx.iter().enumerate() {
                            let d = d_hat[t] + atoms[a].0;
                            let net = x + stored - d;
                            if net < 0.0 {
                                cost += p * -net;
                                weighted += p * (depth + 1) as f64;
                                stored = 0.0;
                                depth = 0;
                            } else if net >= b {
                                stored = b;
                                depth = 0;
                            } else {
                                stored = net;
                                depth += 1;
                            }
                        }
                    }
                }
            }
            worst = worst
                .max((lat.cost_per_voll - cost).abs())
                .max((lat.depth_weighted_shortfall - weighted).abs());
        }
    }
    let took = start.elapsed();
    Outcome {
        pass: worst < 1e-10 && took < Duration::from_secs(10),
        detail: format!(
            "max |lattice - enumeration| = {worst:.2e} over 9 (B, x) cases in {took:.2?}"
        ),
    }
}

fn c7_threshold_sanity() -> Outcome {
    // Φ⁻¹(1 − 72/1000), 30-digit reference
    let z_star = 1.461_056_269_186_907;
    let (d, s) = (0.3, 0.1);
    let fc = ForecastModel::constant(1, d, s);
    let root =
        solve_stage_threshold(72.0, |psi| closed_form_b0(psi, &fc, VOLL).1, d, s, VOLL).unwrap();
    let newsvendor_err = (root.psi - d - s * z_star).abs();

    let sc = scenario();
    let cfg = SolverConfig::default();
    let mut worst_res: f64 = 0.0;
    for b in [0.001, 0.01] {
        let sc = sc.with_capacity(b).unwrap();
        for engine in [Engine::Lattice, Engine::Ct] {
            let term = terminal_curve(&sc, engine, &cfg).unwrap();
            let sched = solve_with_terminal(&sc, &term, &cfg).unwrap();
            for st in &sched.stages {
                worst_res = worst_res.max(st.residual.abs());
            }
        }
    }
    Outcome {
        pass: newsvendor_err < 1e-4 && worst_res < 1e-6 * VOLL,
        detail: format!(
            "|psi - D - sigma z*| = {newsvendor_err:.2e}; worst stage residual {worst_res:.2e}"
        ),
    }
}

fn c8_fig4() -> Outcome {
    let start = Instant::now();
    let sc = scenario().with_capacity(0.001).unwrap();
    let policies = Policy::parse_list("3sigma,lattice,ct,ideal").unwrap();
    let built = build_schedules(&sc, &policies, &SolverConfig::default()).unwrap();
    let scheds: Vec<(Policy, Option<ThresholdSchedule>)> =
        built.into_iter().map(|(p, s, _)| (p, s)).collect();
    let mut order_ok = true;
    let mut violations = 0usize;
    let mut notes = Vec::new();
    for i in 0..9 {
        let d = -0.8 + 0.2 * i as f64;
        let costs = evaluate_policies(&sc.with_total_mean(d), &scheds, 2000, 0x8000 + i as u64);
        for (k, _) in policies.iter().enumerate() {
            for (c, ideal) in costs.costs[k].iter().zip(&costs.ideal) {
                if *c < ideal - 1e-9 * (1.0 + ideal.abs()) {
                    violations += 1;
                }
            }
        }
        let (three, lat, ct) = (&costs.costs[0], &costs.costs[1], &costs.costs[2]);
        let paired = |a: &[f64], b: &[f64]| {
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            mean_se(&diff)
        };
        let (d3l, se3l) = paired(three, lat);
        let (dcl, secl) = paired(ct, lat);
        let (d3c, se3c) = paired(three, ct);
        let ok = d3l >= -3.0 * se3l && dcl >= -3.0 * secl && d3c >= -3.0 * se3c;
        order_ok &= ok;
        notes.push(format!("D={d:+.1}: 3s-lat {d3l:.3}, ct-lat {dcl:.3}"));
    }
    let took = start.elapsed();
    Outcome {
        pass: order_ok && violations == 0 && took < Duration::from_secs(600),
        detail: format!(
            "J_3s >= J_ct >= J_lattice within 3 paired se: {order_ok}; per-path J < J_0: {violations}; {took:.2?}; {}",
            notes.join("; ")
        ),
    }
}

fn c9_fig3b_fig5() -> Outcome {
    let start = Instant::now();
    let base = scenario().with_total_mean(0.4);
    let dv = base.delivery_variance();
    let sw = dv.within_interval.sqrt();
    let fc = base.forecast();
    let total = base.total_mean();
    let mut above_small = true;
    let mut below_large = true;
    for k in 0..=8 {
        let x = total + (-2.0 + 0.5 * k as f64) * sw;
        let ct_small = ct_terminal_cost(x, total, dv.within_interval, 0.001, VOLL);
        let lat_small = lattice_terminal_cost(x, &fc, 0.001, VOLL);
        let ct_large = ct_terminal_cost(x, total, dv.within_interval, 0.01, VOLL);
        let lat_large = lattice_terminal_cost(x, &fc, 0.01, VOLL);
        above_small &= ct_small > lat_small;
        below_large &= ct_large < lat_large;
    }
    let policies = Policy::parse_list("lattice,ct").unwrap();
    let grid = log_grid(1e-4, 1e-1, 7);
    let opts = BenchOptions {
        timing: false,
        ..Default::default()
    };
    let table = sweep(
        &base,
        SweepAxis::Capacity,
        &grid,
        &policies,
        2000,
        0x9000,
        &opts,
    )
    .unwrap();
    let at = |b: f64, p: &str| {
        table
            .rows
            .iter()
            .find(|r| r.b == b && r.policy == p)
            .map(|r| (r.mean_cost, r.stderr))
            .unwrap()
    };
    let mut ends = Vec::new();
    let mut ends_ok = true;
    for b in [grid[0], grid[grid.len() - 1]] {
        let (l, ls) = at(b, "lattice");
        let (c, cs) = at(b, "ct");
        ends_ok &= c - l > 3.0 * (ls * ls + cs * cs).sqrt();
        ends.push(format!("B={b:.0e}: ct {c:.3} vs lattice {l:.3}"));
    }
    let took = start.elapsed();
    Outcome {
        pass: above_small && below_large && ends_ok,
        detail: format!(
            "ct above discrete at B=1e-3: {above_small}; below at B=1e-2: {below_large}; {}; {took:.2?}",
            ends.join(", ")
        ),
    }
}

fn c10_scaling() -> Outcome {
    let sc = scenario();
    let s2 = sc.delivery_variance().within_interval;
    let mut identical = true;
    let mut cases = 0;
    for alpha in [0.5, 2.0, 10.0] {
        // inputs whose products with alpha are exact, so both calls see the same ratio
        for (b, var) in [(0.001, s2), (0.01, s2), (0.375, 0.8125), (1.5, 0.0625)] {
            let (sb, sv) = (alpha * b, alpha * var);
            if sb / alpha != b || sv / alpha != var || sb / sv != b / var {
                continue;
            }
            for x in [0.3, 0.4, 0.41, 0.5] {
                let a = ct_terminal_cost(x, 0.4, var, b, VOLL);
                let c = ct_terminal_cost(x, 0.4, sv, sb, VOLL);
                identical &= a.to_bits() == c.to_bits();
                let ga = ct_terminal_subgradient(x, 0.4, var, b, VOLL);
                let gc = ct_terminal_subgradient(x, 0.4, sv, sb, VOLL);
                identical &= ga.to_bits() == gc.to_bits();
                cases += 1;
            }
        }
    }
    Outcome {
        pass: identical && cases >= 12,
        detail: format!("bit-identical over {cases} (alpha, B, sigma2, x) cases: {identical}"),
    }
}

fn c11_determinism() -> Outcome {
    let sc = scenario().with_total_mean(0.4);
    let policies = Policy::parse_list("3sigma,lattice,ct,ideal").unwrap();
    let opts = BenchOptions {
        timing: false,
        ..Default::default()
    };
    let a = run_benchmark(&sc, &policies, 500, 11, &opts)
        .unwrap()
        .to_csv_string()
        .unwrap();
    let b = run_benchmark(&sc, &policies, 500, 11, &opts)
        .unwrap()
        .to_csv_string()
        .unwrap();
    Outcome {
        pass: a == b && !a.is_empty(),
        detail: format!("{} bytes, identical: {}", a.len(), a == b),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("rbm flow balance", c1_flow_balance),
        ("rbm vs reflected walk", c2_rbm_simulation),
        ("lattice vs monte carlo", c3_lattice_vs_mc),
        ("subgradient vs finite differences", c4_subgradient),
        ("zero-capacity closed form", c5_closed_form_b0),
        ("brute-force enumeration", c6_brute_force),
        ("threshold sanity", c7_threshold_sanity),
        ("cost ordering over D", c8_fig4),
        ("ct vs discrete over B", c9_fig3b_fig5),
        ("ct scaling law", c10_scaling),
        ("benchmark determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {:2} {tag} {name}: {}", i + 1, out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

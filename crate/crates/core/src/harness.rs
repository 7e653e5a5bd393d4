//! Monte Carlo policy benchmark, parameter sweeps and result files.

use crate::dispatch::{
    ideal_policy_cost, simulate_policy_on, solve_with_terminal, terminal_curve,
    three_sigma_schedule, RunDraws, SolverConfig, ThresholdSchedule,
};
use crate::error::{Result, RldError};
use crate::model::Direction;
use crate::scenario::Scenario;
use crate::terminal::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

/// A dispatch policy to benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    ThreeSigma,
    Threshold(Engine),
    Ideal,
}

impl Policy {
    pub fn tag(&self) -> &'static str {
        match self {
            Policy::ThreeSigma => "3sigma",
            Policy::Threshold(e) => e.tag(),
            Policy::Ideal => "ideal",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Policy>> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Policy {
    type Err = RldError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3sigma" => Ok(Policy::ThreeSigma),
            "ideal" => Ok(Policy::Ideal),
            other => other.parse::<Engine>().map(Policy::Threshold).map_err(|_| {
                RldError::validation(
                    "policy",
                    format!("unknown policy `{other}` (expected 3sigma, lattice, mc, ct or ideal)"),
                )
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub policy: String,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub n_runs: usize,
    pub mean_cost: f64,
    pub stderr: f64,
    pub integration_cost: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkTable {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)
                .map_err(|e| RldError::Domain(format!("benchmark table: {e}")))?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "policy",
                "D",
                "B",
                "n_runs",
                "mean_cost",
                "stderr",
                "integration_cost",
                "wall_ms",
            ])
            .map_err(|e| RldError::Domain(format!("benchmark table: {e}")))?;
        }
        w.flush()
            .map_err(|e| RldError::Domain(format!("benchmark table: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<BenchmarkRow>, _>>()
            .map_err(|e| RldError::Parse {
                path: "<benchmark table>".into(),
                message: e.to_string(),
            })?;
        Ok(Self { rows })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn row(&self, policy: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }
}

/// Settings shared by benchmarks and sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchOptions {
    pub solver: SolverConfig,
    /// Record wall-clock milliseconds; when off the column is written as zero so that
    /// repeated runs produce identical files.
    pub timing: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            timing: true,
        }
    }
}

/// Schedules for the threshold policies of one scenario, with solve times.
pub fn build_schedules(
    scenario: &Scenario,
    policies: &[Policy],
    solver: &SolverConfig,
) -> Result<Vec<(Policy, Option<ThresholdSchedule>, f64)>> {
    policies
        .iter()
        .map(|&p| {
            let start = Instant::now();
            let sched = match p {
                Policy::Ideal => None,
                Policy::ThreeSigma => Some(three_sigma_schedule(
                    &scenario.curve,
                    &scenario.ladder,
                    &scenario.forecast(),
                )),
                Policy::Threshold(engine) => Some(
                    terminal_curve(scenario, engine, solver)
                        .and_then(|t| solve_with_terminal(scenario, &t, solver)),
                ),
            };
            let sched = sched.transpose().map_err(|e| RldError::Policy {
                policy: p.tag().to_string(),
                source: Box::new(e),
            })?;
            Ok((p, sched, start.elapsed().as_secs_f64() * 1e3))
        })
        .collect()
}

/// Per-run costs of each policy on common random numbers, plus the ideal cost.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyCosts {
    pub policies: Vec<Policy>,
    /// `costs[i][run]` for policy `i`.
    pub costs: Vec<Vec<f64>>,
    pub ideal: Vec<f64>,
}

/// Simulates every schedule on the same `n_runs` draws.
pub fn evaluate_policies(
    scenario: &Scenario,
    schedules: &[(Policy, Option<ThresholdSchedule>)],
    n_runs: usize,
    seed: u64,
) -> PolicyCosts {
    let c1 = scenario.ladder.stage(1).price;
    let x_min = if scenario
        .ladder
        .stages()
        .iter()
        .all(|s| s.direction == Direction::Buy)
    {
        0.0
    } else {
        f64::NEG_INFINITY
    };
    let voll = scenario.cost.voll;
    let per_run: Vec<(Vec<f64>, f64)> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let draws = RunDraws::sample(scenario, seed, run as u64);
            let deficits = draws.deficits(scenario);
            let (_, ideal) = ideal_policy_cost(&deficits, &scenario.storage, c1, voll, x_min);
            let costs = schedules
                .iter()
                .map(|(_, s)| match s {
                    Some(s) => simulate_policy_on(s, scenario, &draws, &deficits).total_cost,
                    None => ideal,
                })
                .collect();
            (costs, ideal)
        })
        .collect();
    let mut costs = vec![Vec::with_capacity(n_runs); schedules.len()];
    let mut ideal = Vec::with_capacity(n_runs);
    for (c, i) in per_run {
        for (k, v) in c.into_iter().enumerate() {
            costs[k].push(v);
        }
        ideal.push(i);
    }
    PolicyCosts {
        policies: schedules.iter().map(|(p, _)| *p).collect(),
        costs,
        ideal,
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn table_from(
    scenario: &Scenario,
    costs: &PolicyCosts,
    solve_ms: &[f64],
    sim_ms: f64,
    timing: bool,
) -> BenchmarkTable {
    let rows = costs
        .policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (mean, se) = mean_stderr(&costs.costs[i]);
            let gap: Vec<f64> = costs.costs[i]
                .iter()
                .zip(&costs.ideal)
                .map(|(a, b)| a - b)
                .collect();
            let integration = if *p == Policy::Ideal {
                0.0
            } else {
                gap.iter().sum::<f64>() / gap.len() as f64
            };
            BenchmarkRow {
                policy: p.tag().to_string(),
                d: scenario.total_mean(),
                b: scenario.storage.capacity,
                n_runs: costs.ideal.len(),
                mean_cost: mean,
                stderr: se,
                integration_cost: integration,
                wall_ms: if timing { solve_ms[i] + sim_ms } else { 0.0 },
            }
        })
        .collect();
    BenchmarkTable { rows }
}

/// Solves every requested policy and evaluates it on `n_runs` shared draws.
pub fn run_benchmark(
    scenario: &Scenario,
    policies: &[Policy],
    n_runs: usize,
    seed: u64,
    opts: &BenchOptions,
) -> Result<BenchmarkTable> {
    if n_runs == 0 {
        return Err(RldError::validation("runs", "must be at least 1"));
    }
    if policies.is_empty() {
        return Err(RldError::validation(
            "policy",
            "at least one policy required",
        ));
    }
    let built = build_schedules(scenario, policies, &opts.solver)?;
    let solve_ms: Vec<f64> = built.iter().map(|b| b.2).collect();
    let scheds: Vec<(Policy, Option<ThresholdSchedule>)> =
        built.into_iter().map(|(p, s, _)| (p, s)).collect();
    let start = Instant::now();
    let costs = evaluate_policies(scenario, &scheds, n_runs, seed);
    let sim_ms = start.elapsed().as_secs_f64() * 1e3 / policies.len() as f64;
    Ok(table_from(scenario, &costs, &solve_ms, sim_ms, opts.timing))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    /// Predicted total deficit over the delivery interval.
    MeanDeficit,
    Capacity,
}

impl FromStr for SweepAxis {
    type Err = RldError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D" | "d" => Ok(SweepAxis::MeanDeficit),
            "B" | "b" => Ok(SweepAxis::Capacity),
            other => Err(RldError::validation(
                "axis",
                format!("unknown sweep axis `{other}` (expected D or B)"),
            )),
        }
    }
}

/// One benchmark per grid point; point `i` uses seed `seed + i`.
///
/// Along the deficit axis the schedules are solved once: thresholds are offsets from
/// the forecast, and the cost-to-go only depends on the position relative to it.
pub fn sweep(
    scenario: &Scenario,
    axis: SweepAxis,
    grid: &[f64],
    policies: &[Policy],
    n_runs: usize,
    seed: u64,
    opts: &BenchOptions,
) -> Result<BenchmarkTable> {
    if grid.is_empty() {
        return Err(RldError::validation("grid", "sweep grid is empty"));
    }
    if n_runs == 0 {
        return Err(RldError::validation("runs", "must be at least 1"));
    }
    let mut table = BenchmarkTable::default();
    match axis {
        SweepAxis::MeanDeficit => {
            let built = build_schedules(scenario, policies, &opts.solver)?;
            for (i, &d) in grid.iter().enumerate() {
                let sc = scenario.with_total_mean(d);
                let scheds: Vec<(Policy, Option<ThresholdSchedule>)> =
                    built.iter().map(|(p, s, _)| (*p, s.clone())).collect();
                let start = Instant::now();
                let costs = evaluate_policies(&sc, &scheds, n_runs, seed.wrapping_add(i as u64));
                let sim_ms = start.elapsed().as_secs_f64() * 1e3 / policies.len() as f64;
                let solve_ms: Vec<f64> = if i == 0 {
                    built.iter().map(|b| b.2).collect()
                } else {
                    vec![0.0; built.len()]
                };
                table
                    .rows
                    .extend(table_from(&sc, &costs, &solve_ms, sim_ms, opts.timing).rows);
            }
        }
        SweepAxis::Capacity => {
            for (i, &b) in grid.iter().enumerate() {
                let sc = scenario.with_capacity(b)?;
                let t = run_benchmark(&sc, policies, n_runs, seed.wrapping_add(i as u64), opts)?;
                table.rows.extend(t.rows);
            }
        }
    }
    Ok(table)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    /// One `x,mean_cost,stderr,integration_cost` file per policy.
    PlotData,
}

impl FromStr for OutputFormat {
    type Err = RldError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "plotdata" => Ok(OutputFormat::PlotData),
            other => Err(RldError::validation(
                "format",
                format!("unknown format `{other}` (expected csv or plotdata)"),
            )),
        }
    }
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|source| RldError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the table and returns the files produced.
pub fn emit_results(
    table: &BenchmarkTable,
    format: OutputFormat,
    path: &Path,
) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(RldError::validation("table", "no rows to write"));
    }
    match format {
        OutputFormat::Csv => {
            table.write_csv(create(path)?)?;
            Ok(vec![path.to_path_buf()])
        }
        OutputFormat::PlotData => {
            let d0 = table.rows[0].d;
            let by_d = table.rows.iter().any(|r| r.d != d0);
            let axis = if by_d { "D" } else { "B" };
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "plot".into());
            let dir = path.parent().unwrap_or_else(|| Path::new("."));
            let mut order: Vec<&str> = Vec::new();
            for r in &table.rows {
                if !order.contains(&r.policy.as_str()) {
                    order.push(&r.policy);
                }
            }
            let mut written = Vec::new();
            for policy in order {
                let file = dir.join(format!("{stem}_{policy}.csv"));
                let mut w = csv::Writer::from_writer(create(&file)?);
                let err = |e: csv::Error| RldError::Domain(format!("plot data: {e}"));
                w.write_record([axis, "mean_cost", "stderr", "integration_cost"])
                    .map_err(err)?;
                for r in table.rows.iter().filter(|r| r.policy == policy) {
                    let x = if by_d { r.d } else { r.b };
                    w.write_record([
                        x.to_string(),
                        r.mean_cost.to_string(),
                        r.stderr.to_string(),
                        r.integration_cost.to_string(),
                    ])
                    .map_err(err)?;
                }
                w.flush().map_err(|e| RldError::Io {
                    path: file.display().to_string(),
                    source: e,
                })?;
                written.push(file);
            }
            Ok(written)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_tags_parse() {
        let list = Policy::parse_list("3sigma, lattice,mc,ct,ideal").unwrap();
        assert_eq!(list.len(), 5);
        for p in list {
            assert_eq!(p.tag().parse::<Policy>().unwrap(), p);
        }
        assert!(Policy::parse_list("best").is_err());
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        assert_eq!(mean_stderr(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let table = BenchmarkTable {
            rows: vec![
                BenchmarkRow {
                    policy: "lattice".into(),
                    d: 0.4,
                    b: 0.001,
                    n_runs: 10,
                    mean_cost: 21.5,
                    stderr: 0.25,
                    integration_cost: 1.125,
                    wall_ms: 0.0,
                },
                BenchmarkRow {
                    policy: "ideal".into(),
                    d: 0.4,
                    b: 0.001,
                    n_runs: 10,
                    mean_cost: 20.375,
                    stderr: 0.5,
                    integration_cost: 0.0,
                    wall_ms: 0.0,
                },
            ],
        };
        let text = table.to_csv_string().unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("policy,D,B,n_runs,mean_cost,stderr,integration_cost,wall_ms\n"));
        assert_eq!(BenchmarkTable::read_csv(text.as_bytes()).unwrap(), table);
    }
}

use clap::{Args, Parser, Subcommand};
use rld_core::harness::mean_stderr;
use rld_core::*;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Risk limiting dispatch with fast storage.
#[derive(Parser, Debug)]
#[command(name = "rld", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the per-stage thresholds of one engine.
    Thresholds {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "lattice")]
        engine: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-run total costs of each policy on common random numbers.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean cost, standard error and integration cost of each policy.
    Benchmark {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Benchmark over a grid of mean deficits or storage capacities.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// `D` for the predicted interval deficit, `B` for storage capacity.
        #[arg(long, default_value = "D")]
        axis: String,
        /// Explicit comma-separated grid; overrides the range options.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<f64>>,
        /// Number of grid points when no explicit grid is given.
        #[arg(long, default_value_t = 9)]
        grid_points: usize,
        /// Range start; defaults to -0.8 for `D` and 1e-4 for `B` (log-spaced).
        #[arg(long, allow_hyphen_values = true)]
        from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
    },
    /// Long-run push rates of the reflected Brownian motion over a parameter grid.
    RbmTable {
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "-1,-0.5,0,0.5,1"
        )]
        mu: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        sigma: Vec<f64>,
        #[arg(long = "barrier", value_delimiter = ',', default_value = "0.5,1,2")]
        barrier: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Override the storage capacity.
    #[arg(long = "capacity", short = 'B')]
    capacity: Option<f64>,
    /// Override the predicted total deficit of the delivery interval.
    #[arg(long = "total-deficit", short = 'D', allow_hyphen_values = true)]
    total_deficit: Option<f64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value = "3sigma,lattice,ct,ideal")]
    policy: String,
    #[arg(long, default_value_t = 2000)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples for the nested expectation when two or more later updates remain.
    #[arg(long)]
    mc_samples: Option<usize>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// `csv` or `plotdata` (one file per policy, needs --out).
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write zero wall times so that repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
}

fn load(args: &ScenarioArgs) -> Result<Scenario> {
    let mut sc = load_scenario(&args.scenario)?;
    if let Some(b) = args.capacity {
        sc = sc.with_capacity(b)?;
    }
    if let Some(d) = args.total_deficit {
        sc = sc.with_total_mean(d);
    }
    Ok(sc)
}

fn solver(run: &RunArgs) -> SolverConfig {
    let mut cfg = SolverConfig::default();
    if let Some(n) = run.mc_samples {
        cfg.mc_samples = n;
    }
    cfg
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    match out {
        Some(p) => File::create(p)
            .map(|f| Box::new(io::BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|source| RldError::Io {
                path: p.display().to_string(),
                source,
            }),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn emit(table: &BenchmarkTable, output: &OutputArgs) -> Result<()> {
    let format: OutputFormat = output.format.parse()?;
    match (format, &output.out) {
        (OutputFormat::Csv, None) => table.write_csv(io::stdout().lock()),
        (_, Some(path)) => emit_results(table, format, path).map(|_| ()),
        (OutputFormat::PlotData, None) => {
            Err(RldError::validation("out", "plotdata output needs --out"))
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn sweep_grid(
    axis: SweepAxis,
    grid: Option<Vec<f64>>,
    n: usize,
    from: Option<f64>,
    to: Option<f64>,
) -> Result<Vec<f64>> {
    if let Some(g) = grid {
        return Ok(g);
    }
    if n == 0 {
        return Err(RldError::validation("grid-points", "must be at least 1"));
    }
    Ok(match axis {
        SweepAxis::MeanDeficit => linspace(from.unwrap_or(-0.8), to.unwrap_or(0.8), n),
        SweepAxis::Capacity => {
            let (a, b) = (from.unwrap_or(1e-4), to.unwrap_or(1e-1));
            if !(a > 0.0 && b > 0.0) {
                return Err(RldError::validation(
                    "from",
                    "capacity range must be positive",
                ));
            }
            linspace(a.log10(), b.log10(), n)
                .into_iter()
                .map(|e| 10f64.powf(e))
                .collect()
        }
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Thresholds {
            scenario,
            engine,
            out,
        } => {
            let sc = load(&scenario)?;
            let sched = if engine == "3sigma" {
                three_sigma_schedule(&sc.curve, &sc.ladder, &sc.forecast())?
            } else {
                let engine: Engine = engine.parse()?;
                solve_thresholds_backward(&sc, engine, &SolverConfig::default())?
            };
            sched.write_csv(sink(out.as_deref())?)
        }
        Command::Simulate { scenario, run, out } => {
            let sc = load(&scenario)?;
            if run.runs == 0 {
                return Err(RldError::validation("runs", "must be at least 1"));
            }
            let policies = Policy::parse_list(&run.policy)?;
            let built = rld_core::harness::build_schedules(&sc, &policies, &solver(&run))?;
            let scheds: Vec<_> = built.into_iter().map(|(p, s, _)| (p, s)).collect();
            let costs = evaluate_policies(&sc, &scheds, run.runs, run.seed);
            let mut w = csv_writer(sink(out.as_deref())?);
            write_row(&mut w, &["run", "policy", "total_cost", "ideal_cost"])?;
            for r in 0..run.runs {
                for (i, p) in costs.policies.iter().enumerate() {
                    write_row(
                        &mut w,
                        &[
                            &r.to_string(),
                            p.tag(),
                            &costs.costs[i][r].to_string(),
                            &costs.ideal[r].to_string(),
                        ],
                    )?;
                }
            }
            w.flush()
                .map_err(|e| RldError::Domain(format!("output: {e}")))?;
            for (i, p) in costs.policies.iter().enumerate() {
                let (m, se) = mean_stderr(&costs.costs[i]);
                eprintln!("{p}: mean {m:.4} (se {se:.4})");
            }
            Ok(())
        }
        Command::Benchmark {
            scenario,
            run,
            output,
        } => {
            let sc = load(&scenario)?;
            let opts = BenchOptions {
                solver: solver(&run),
                timing: !output.no_timing,
            };
            let policies = Policy::parse_list(&run.policy)?;
            let table = run_benchmark(&sc, &policies, run.runs, run.seed, &opts)?;
            emit(&table, &output)
        }
        Command::Sweep {
            scenario,
            run,
            output,
            axis,
            grid,
            grid_points,
            from,
            to,
        } => {
            let sc = load(&scenario)?;
            let axis: SweepAxis = axis.parse()?;
            let grid = sweep_grid(axis, grid, grid_points, from, to)?;
            let opts = BenchOptions {
                solver: solver(&run),
                timing: !output.no_timing,
            };
            let policies = Policy::parse_list(&run.policy)?;
            let table = sweep(&sc, axis, &grid, &policies, run.runs, run.seed, &opts)?;
            emit(&table, &output)
        }
        Command::RbmTable {
            mu,
            sigma,
            barrier,
            out,
        } => {
            let mut w = csv_writer(sink(out.as_deref())?);
            write_row(&mut w, &["mu", "sigma", "B", "v_rate", "q_rate"])?;
            for &m in &mu {
                for &s in &sigma {
                    for &b in &barrier {
                        let (v, q) = rbm_long_run(&RbmParams::new(m, s, b)?);
                        write_row(
                            &mut w,
                            &[
                                &m.to_string(),
                                &s.to_string(),
                                &b.to_string(),
                                &v.to_string(),
                                &q.to_string(),
                            ],
                        )?;
                    }
                }
            }
            w.flush()
                .map_err(|e| RldError::Domain(format!("output: {e}")))
        }
    }
}

fn csv_writer(out: Box<dyn Write>) -> csv::Writer<Box<dyn Write>> {
    csv::Writer::from_writer(out)
}

fn write_row(w: &mut csv::Writer<Box<dyn Write>>, fields: &[&str]) -> Result<()> {
    w.write_record(fields)
        .map_err(|e| RldError::Domain(format!("output: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

use rld_core::harness::{build_schedules, mean_stderr};
use rld_core::*;
use std::path::PathBuf;

fn default_scenario() -> Scenario {
    load_scenario(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/scenario_default.json"),
    )
    .unwrap()
}

fn quiet() -> BenchOptions {
    BenchOptions {
        timing: false,
        ..Default::default()
    }
}

#[test]
fn same_seed_gives_identical_tables() {
    let sc = default_scenario();
    let pols = Policy::parse_list("3sigma,ct,ideal").unwrap();
    let a = run_benchmark(&sc, &pols, 300, 5, &quiet()).unwrap();
    let b = run_benchmark(&sc, &pols, 300, 5, &quiet()).unwrap();
    assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
    let c = run_benchmark(&sc, &pols, 300, 6, &quiet()).unwrap();
    assert_ne!(a.rows[0].mean_cost, c.rows[0].mean_cost);
}

#[test]
fn policy_tags_round_trip() {
    let pols = Policy::parse_list("3sigma, lattice,mc,ct,ideal").unwrap();
    let tags: Vec<&str> = pols.iter().map(|p| p.tag()).collect();
    assert_eq!(tags, ["3sigma", "lattice", "mc", "ct", "ideal"]);
    assert!(Policy::parse_list("3sigma,greedy")
        .unwrap_err()
        .is_validation());
}

#[test]
fn common_random_numbers_shrink_difference_variance() {
    let sc = default_scenario();
    let built = build_schedules(
        &sc,
        &Policy::parse_list("ct,ideal").unwrap(),
        &SolverConfig::default(),
    )
    .unwrap();
    let scheds: Vec<_> = built.into_iter().map(|(p, s, _)| (p, s)).collect();
    let n = 1000;
    let shared = evaluate_policies(&sc, &scheds, n, 1);
    let paired: Vec<f64> = shared.costs[0]
        .iter()
        .zip(&shared.costs[1])
        .map(|(a, b)| a - b)
        .collect();
    let first = evaluate_policies(&sc, &scheds[..1], n, 2);
    let second = evaluate_policies(&sc, &scheds[1..], n, 3);
    let independent: Vec<f64> = first.costs[0]
        .iter()
        .zip(&second.costs[0])
        .map(|(a, b)| a - b)
        .collect();
    let (_, se_paired) = mean_stderr(&paired);
    let (_, se_indep) = mean_stderr(&independent);
    assert!(se_paired < 0.5 * se_indep, "{se_paired} vs {se_indep}");
}

#[test]
fn quadrupling_runs_halves_the_standard_error() {
    let sc = default_scenario();
    let pols = [Policy::ThreeSigma];
    let small = run_benchmark(&sc, &pols, 1000, 21, &quiet()).unwrap();
    let large = run_benchmark(&sc, &pols, 4000, 21, &quiet()).unwrap();
    let ratio = small.rows[0].stderr / large.rows[0].stderr;
    assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn perfect_information_ties_every_policy() {
    let mut sc = default_scenario();
    sc.curve = ForecastErrorCurve::new(vec![(48.0, 0.0), (0.0, 0.0)]).unwrap();
    let t = run_benchmark(&sc, &[Policy::ThreeSigma, Policy::Ideal], 1, 0, &quiet()).unwrap();
    for row in &t.rows {
        assert!(
            (row.mean_cost - 52.0 * 0.4).abs() < 1e-9,
            "{}: {}",
            row.policy,
            row.mean_cost
        );
        assert!(row.integration_cost.abs() < 1e-9);
    }
}

#[test]
fn deficit_sweep_integration_costs_are_nonnegative() {
    let sc = default_scenario();
    let grid = [-0.8, -0.4, 0.0, 0.4, 0.8];
    let t = sweep(
        &sc,
        SweepAxis::MeanDeficit,
        &grid,
        &Policy::parse_list("3sigma,ct,ideal").unwrap(),
        200,
        3,
        &quiet(),
    )
    .unwrap();
    assert_eq!(t.rows.len(), 15);
    for row in &t.rows {
        assert!(row.integration_cost >= 0.0, "{row:?}");
        assert!(row.n_runs == 200 && row.b == 0.001);
    }
    let ds: Vec<f64> = t.rows.iter().step_by(3).map(|r| r.d).collect();
    for (a, b) in ds.iter().zip(grid) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn csv_round_trips_and_plotdata_splits_by_policy() {
    let sc = default_scenario();
    let t = sweep(
        &sc,
        SweepAxis::MeanDeficit,
        &[0.0, 0.4],
        &Policy::parse_list("3sigma,ideal").unwrap(),
        50,
        1,
        &quiet(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("bench.csv");
    let files = emit_results(&t, OutputFormat::Csv, &csv_path).unwrap();
    assert_eq!(files, vec![csv_path.clone()]);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "policy,D,B,n_runs,mean_cost,stderr,integration_cost,wall_ms"
    );
    assert_eq!(text.lines().count(), 1 + t.rows.len());
    let back = BenchmarkTable::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back, t);

    let files = emit_results(&t, OutputFormat::PlotData, &dir.path().join("fig.csv")).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["fig_3sigma.csv", "fig_ideal.csv"]);
    let body = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(
        body.lines().next().unwrap(),
        "D,mean_cost,stderr,integration_cost"
    );
    assert_eq!(body.lines().count(), 3);
}

#[test]
fn bad_inputs_are_validation_errors() {
    let sc = default_scenario();
    let pols = [Policy::ThreeSigma];
    assert!(run_benchmark(&sc, &pols, 0, 1, &quiet())
        .unwrap_err()
        .is_validation());
    assert!(run_benchmark(&sc, &[], 10, 1, &quiet())
        .unwrap_err()
        .is_validation());
    assert!(sweep(&sc, SweepAxis::Capacity, &[], &pols, 10, 1, &quiet())
        .unwrap_err()
        .is_validation());
    assert!("Q".parse::<SweepAxis>().unwrap_err().is_validation());
    assert!("xml".parse::<OutputFormat>().unwrap_err().is_validation());
    let empty = BenchmarkTable::default();
    assert!(emit_results(&empty, OutputFormat::Csv, &PathBuf::from("unused.csv")).is_err());
    let t = run_benchmark(&sc, &pols, 5, 1, &quiet()).unwrap();
    let missing = PathBuf::from("/nonexistent-dir/out.csv");
    assert!(matches!(
        emit_results(&t, OutputFormat::Csv, &missing),
        Err(RldError::Io { .. })
    ));
}

#[test]
fn solver_failures_carry_the_policy_tag() {
    let mut sc = default_scenario();
    sc.storage.storage_efficiency = 0.9;
    let err =
        run_benchmark(&sc, &[Policy::Threshold(Engine::Lattice)], 5, 1, &quiet()).unwrap_err();
    assert!(
        matches!(&err, RldError::Policy { policy, .. } if policy == "lattice"),
        "{err}"
    );
    assert!(!err.is_validation());
}

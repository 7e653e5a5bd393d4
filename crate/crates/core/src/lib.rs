//! Risk limiting dispatch with fast storage: threshold solvers, delivery-interval
//! storage simulation, the recombinant-lattice terminal cost and a continuous-time
//! reflected Brownian motion approximation.

pub mod dispatch;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod model;
pub mod normal;
pub mod rbm;
pub mod scenario;
pub mod storage;
pub mod terminal;
pub mod walk;

pub use dispatch::{
    dispatch_decision, ideal_policy_cost, simulate_policy, solve_ct_thresholds,
    solve_stage_threshold, solve_thresholds_backward, three_sigma_schedule, PolicyResult, RunDraws,
    ScheduleKind, SolverConfig, StageThreshold, ThresholdSchedule,
};
pub use error::{Result, RldError};
pub use harness::{
    emit_results, evaluate_policies, run_benchmark, sweep, BenchOptions, BenchmarkRow,
    BenchmarkTable, OutputFormat, Policy, PolicyCosts, SweepAxis,
};
pub use lattice::{
    build_lattice, closed_form_b0, lattice_terminal, lattice_terminal_cost,
    lattice_terminal_subgradient, node_transition_probs, Lattice, LatticeNode, NodeProbabilities,
};
pub use model::{
    delivery_variance, stage_error_variance, validate_ladder, CostModel, DeliveryVariance,
    Direction, ForecastErrorCurve, ForecastModel, MarketLadder, MarketStage, PriceViolation,
    StorageSpec,
};
pub use rbm::{
    ct_terminal_cost, ct_terminal_subgradient, h_func, h_prime, rbm_density, rbm_long_run,
    RbmParams,
};
pub use scenario::{load_scenario, Scenario};
pub use storage::{
    optimal_storage_action, per_path_subgradient_estimate, reformulate_vq, simulate_delivery,
    step_storage, PathOutcome, VqReformulation,
};
pub use terminal::{Engine, TerminalConfig, TerminalCurve};
pub use walk::{truncated_walk_mean, walk_rectangle_prob, FinalMode, StepLaw};

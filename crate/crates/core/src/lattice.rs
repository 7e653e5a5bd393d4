//! Exact expected delivery cost and its subgradient for ideal storage, via the
//! recombinant lattice of effective deficits.
//!
//! Level `t` (1-based within the delivery interval) holds `K_t = 2t − 1` nodes. Node
//! `k = 1` means the device is empty at the start of stage `t`, node `K_t` means it is
//! full, and an interior node at depth `h` means the device left a boundary `h` stages
//! earlier. Every node lies on exactly one chain that starts at a boundary node and
//! advances through interior children, so one random-walk recursion per chain gives all
//! node probabilities on it.

use crate::error::{Result, RldError};
use crate::model::ForecastModel;
use crate::normal::{partial_expectation, sf};
use crate::walk::{chain_profile, ChainProfile, QuadratureConfig, StepLaw};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NodeProbabilities {
    /// Probability of visiting the node.
    pub p: f64,
    /// Visit, then end the stage with a shortfall (device empty).
    pub p_left: f64,
    /// Visit, then end the stage strictly inside the device range.
    pub p_mid: f64,
    /// Visit, then end the stage with the device full.
    pub p_right: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeNode {
    /// Delivery stage, 1-based.
    pub t: usize,
    /// Node index within the level, 1-based.
    pub k: usize,
    /// Predicted effective deficit `D̂_t^k`.
    pub d_hat_eff: f64,
    pub depth: usize,
    pub probs: NodeProbabilities,
    /// `E[error walk; visit and shortfall]`.
    pub shortfall_moment: f64,
    /// Lower and upper bounds on the error walk for staying interior.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    /// Per-stage supply `x = x_{R+1}/T`.
    pub supply: f64,
    pub capacity: f64,
    pub levels: Vec<Vec<LatticeNode>>,
    pub cost_per_voll: f64,
    /// `Σ (h+1)·p_left` over all nodes.
    pub depth_weighted_shortfall: f64,
}

impl Lattice {
    pub fn stages(&self) -> usize {
        self.levels.len()
    }

    /// Node `(t, k)`, both 1-based.
    pub fn node(&self, t: usize, k: usize) -> Option<&LatticeNode> {
        self.levels.get(t.checked_sub(1)?)?.get(k.checked_sub(1)?)
    }

    /// Expected delivery cost at VOLL `c`.
    pub fn terminal_cost(&self, voll: f64) -> f64 {
        voll * self.cost_per_voll
    }

    /// Derivative of the expected cost in the total purchase `x_{R+1}`.
    pub fn terminal_subgradient(&self, voll: f64) -> f64 {
        -(voll / self.stages() as f64) * self.depth_weighted_shortfall
    }

    /// Writes `t,k,d_hat_eff,depth,p,p_left,p_mid,p_right`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| RldError::Domain(format!("lattice dump: {e}"));
        w.write_record([
            "t",
            "k",
            "d_hat_eff",
            "depth",
            "p",
            "p_left",
            "p_mid",
            "p_right",
        ])
        .map_err(err)?;
        for node in self.levels.iter().flatten() {
            w.write_record([
                node.t.to_string(),
                node.k.to_string(),
                node.d_hat_eff.to_string(),
                node.depth.to_string(),
                node.probs.p.to_string(),
                node.probs.p_left.to_string(),
                node.probs.p_mid.to_string(),
                node.probs.p_right.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()
            .map_err(|e| RldError::Domain(format!("lattice dump: {e}")))?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Empty,
    Full,
}

struct ChainSpec {
    start: usize,
    side: Side,
    d_eff: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn chain_spec(d_hat: &[f64], start: usize, side: Side, x: f64, capacity: f64) -> ChainSpec {
    let n = d_hat.len() - start;
    let mut d_eff = Vec::with_capacity(n);
    let mut dk = match side {
        Side::Empty => d_hat[start],
        Side::Full => d_hat[start] - capacity,
    };
    for j in 0..n {
        if j > 0 {
            dk += d_hat[start + j] - x;
        }
        d_eff.push(dk);
    }
    let upper: Vec<f64> = d_eff.iter().map(|d| x - d).collect();
    let lower = upper.iter().map(|u| u - capacity).collect();
    ChainSpec {
        start,
        side,
        d_eff,
        lower,
        upper,
    }
}

/// Maps each chain to a computed profile it is a prefix of, so chains that repeat the
/// same bounds and step laws share one recursion.
fn profiles_for(
    chains: &[ChainSpec],
    laws: &[StepLaw],
    cfg: &QuadratureConfig,
) -> Vec<(usize, std::sync::Arc<ChainProfile>)> {
    let mut order: Vec<usize> = (0..chains.len()).collect();
    order.sort_by_key(|&i| chains[i].start);
    let mut owners: Vec<usize> = Vec::new();
    let mut owner_of = vec![usize::MAX; chains.len()];
    for &i in &order {
        let c = &chains[i];
        let n = c.upper.len();
        let found = owners.iter().copied().find(|&o| {
            let oc = &chains[o];
            oc.upper[..n] == c.upper[..]
                && oc.lower[..n] == c.lower[..]
                && laws[oc.start..oc.start + n] == laws[c.start..]
        });
        match found {
            Some(o) => owner_of[i] = o,
            None => {
                owners.push(i);
                owner_of[i] = i;
            }
        }
    }
    let computed: Vec<(usize, std::sync::Arc<ChainProfile>)> = owners
        .par_iter()
        .map(|&o| {
            let c = &chains[o];
            (
                o,
                std::sync::Arc::new(chain_profile(&laws[c.start..], &c.lower, &c.upper, cfg)),
            )
        })
        .collect();
    owner_of
        .iter()
        .map(|&o| {
            let p = computed
                .iter()
                .find(|(k, _)| *k == o)
                .map(|(_, p)| p.clone())
                .expect("owner computed");
            (o, p)
        })
        .collect()
}

/// Lattice for a general per-stage error law; `laws[t]` is the law of stage `t`'s
/// independent error. `x` is the per-stage supply.
pub fn build_lattice_with_laws(
    d_hat: &[f64],
    laws: &[StepLaw],
    capacity: f64,
    x: f64,
    cfg: &QuadratureConfig,
    keep_nodes: bool,
) -> Result<Lattice> {
    let t_len = d_hat.len();
    if t_len == 0 || laws.len() != t_len {
        return Err(RldError::validation(
            "forecast",
            "need T >= 1 stages and one error law per stage",
        ));
    }
    if !(capacity >= 0.0) || !capacity.is_finite() {
        return Err(RldError::validation(
            "B",
            "capacity must be finite and >= 0",
        ));
    }
    let mut chains = Vec::with_capacity(2 * t_len);
    for start in 0..t_len {
        chains.push(chain_spec(d_hat, start, Side::Empty, x, capacity));
        if start > 0 {
            chains.push(chain_spec(d_hat, start, Side::Full, x, capacity));
        }
    }
    let profiles = profiles_for(&chains, laws, cfg);

    // p0 of each chain, filled level by level
    let mut p0 = vec![0.0; chains.len()];
    let mut levels: Vec<Vec<LatticeNode>> = Vec::new();
    let mut cost = 0.0;
    let mut weighted = 0.0;
    let (mut left_prev, mut right_prev) = (0.0, 0.0);
    for level in 0..t_len {
        let mut left_sum = 0.0;
        let mut right_sum = 0.0;
        let mut nodes = Vec::new();
        for (ci, c) in chains.iter().enumerate() {
            if c.start > level {
                continue;
            }
            if c.start == level {
                p0[ci] = match (c.side, level) {
                    (Side::Empty, 0) => 1.0,
                    (Side::Empty, _) => left_prev,
                    (Side::Full, _) => right_prev,
                };
            }
            let j = level - c.start;
            let prof = &profiles[ci].1;
            let q = p0[ci];
            let visit = if j == 0 { q } else { q * prof.inside[j - 1] };
            let probs = NodeProbabilities {
                p: visit,
                p_left: q * prof.above[j],
                p_mid: q * prof.inside[j],
                p_right: q * prof.below[j],
            };
            let moment = q * prof.above_moment[j];
            left_sum += probs.p_left;
            right_sum += probs.p_right;
            cost += (c.d_eff[j] - x) * probs.p_left + moment;
            weighted += (j + 1) as f64 * probs.p_left;
            if keep_nodes {
                let k = match c.side {
                    Side::Empty => 1 + j,
                    Side::Full => 2 * c.start + 1 + j,
                };
                nodes.push(LatticeNode {
                    t: level + 1,
                    k,
                    d_hat_eff: c.d_eff[j],
                    depth: j,
                    probs,
                    shortfall_moment: moment,
                    lower: c.lower[j],
                    upper: c.upper[j],
                });
            }
        }
        if keep_nodes {
            nodes.sort_by_key(|n| n.k);
            levels.push(nodes);
        } else {
            levels.push(Vec::new());
        }
        left_prev = left_sum;
        right_prev = right_sum;
    }
    Ok(Lattice {
        supply: x,
        capacity,
        levels,
        cost_per_voll: cost,
        depth_weighted_shortfall: weighted,
    })
}

fn gaussian_laws(forecast: &ForecastModel) -> Vec<StepLaw> {
    forecast
        .sigma()
        .iter()
        .map(|&s| StepLaw::Gaussian(s))
        .collect()
}

/// Full lattice with node probabilities at total purchase `x_total`.
pub fn build_lattice(forecast: &ForecastModel, capacity: f64, x_total: f64) -> Result<Lattice> {
    let x = x_total / forecast.stages() as f64;
    build_lattice_with_laws(
        forecast.d_hat(),
        &gaussian_laws(forecast),
        capacity,
        x,
        &QuadratureConfig::default(),
        true,
    )
}

/// Probabilities at node `(t, k)` (1-based) of a built lattice.
pub fn node_transition_probs(lattice: &Lattice, t: usize, k: usize) -> Option<NodeProbabilities> {
    lattice.node(t, k).map(|n| n.probs)
}

/// `(expected delivery cost, derivative in x_total)` for ideal storage.
pub fn lattice_terminal(
    x_total: f64,
    forecast: &ForecastModel,
    capacity: f64,
    voll: f64,
) -> (f64, f64) {
    if capacity == 0.0 {
        return closed_form_b0(x_total, forecast, voll);
    }
    let x = x_total / forecast.stages() as f64;
    let lat = build_lattice_with_laws(
        forecast.d_hat(),
        &gaussian_laws(forecast),
        capacity,
        x,
        &QuadratureConfig::default(),
        false,
    )
    .expect("forecast model already validated");
    (lat.terminal_cost(voll), lat.terminal_subgradient(voll))
}

pub fn lattice_terminal_cost(
    x_total: f64,
    forecast: &ForecastModel,
    capacity: f64,
    voll: f64,
) -> f64 {
    lattice_terminal(x_total, forecast, capacity, voll).0
}

pub fn lattice_terminal_subgradient(
    x_total: f64,
    forecast: &ForecastModel,
    capacity: f64,
    voll: f64,
) -> f64 {
    lattice_terminal(x_total, forecast, capacity, voll).1
}

/// Expected cost and derivative without storage: a sum of independent newsvendor terms.
pub fn closed_form_b0(x_total: f64, forecast: &ForecastModel, voll: f64) -> (f64, f64) {
    let t = forecast.stages() as f64;
    let x = x_total / t;
    let mut cost = 0.0;
    let mut tail = 0.0;
    for (&d, &s) in forecast.d_hat().iter().zip(forecast.sigma()) {
        let a = x - d;
        cost += partial_expectation(a, s);
        tail += if s > 0.0 {
            sf(a / s)
        } else if a < 0.0 {
            1.0
        } else {
            0.0
        };
    }
    (voll * cost, -(voll / t) * tail)
}

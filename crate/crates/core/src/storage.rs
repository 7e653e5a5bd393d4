//! Optimal operation of a fast storage device over the delivery interval.

use crate::error::{Result, RldError};
use crate::model::StorageSpec;
use serde::Serialize;
use std::io::Write;

/// Greedy optimal control: charge any surplus up to the headroom, discharge to cover
/// any shortfall up to the usable energy.
pub fn optimal_storage_action(b: f64, d: f64, x: f64, spec: &StorageSpec) -> Result<f64> {
    check_level(b, spec)?;
    Ok(action_unchecked(b, d, x, spec))
}

#[inline]
fn action_unchecked(b: f64, d: f64, x: f64, spec: &StorageSpec) -> f64 {
    let surplus = (x - d).max(0.0);
    let shortfall = (d - x).max(0.0);
    let charge = if spec.capacity > 0.0 {
        surplus.min((spec.capacity - b) / spec.recharge_efficiency)
    } else {
        0.0
    };
    let discharge = shortfall.min(spec.discharge_efficiency * b);
    charge - discharge
}

fn check_level(b: f64, spec: &StorageSpec) -> Result<()> {
    let tol = spec.boundary_tol();
    if !(b >= -tol && b <= spec.capacity + tol) {
        return Err(RldError::Domain(format!(
            "storage level {b} outside [0, {}]",
            spec.capacity
        )));
    }
    Ok(())
}

/// Next stored energy after applying `u`.
pub fn step_storage(b: f64, u: f64, spec: &StorageSpec) -> Result<f64> {
    check_level(b, spec)?;
    let tol = spec.boundary_tol();
    let (charge, discharge) = (u.max(0.0), u.min(0.0));
    let headroom = if spec.capacity > 0.0 {
        (spec.capacity - b) / spec.recharge_efficiency
    } else {
        0.0
    };
    if charge > headroom + tol || discharge < -spec.discharge_efficiency * b - tol {
        return Err(RldError::Domain(format!(
            "control {u} infeasible at level {b}"
        )));
    }
    Ok(step_unchecked(b, u, spec))
}

#[inline]
fn step_unchecked(b: f64, u: f64, spec: &StorageSpec) -> f64 {
    if spec.capacity == 0.0 {
        return 0.0;
    }
    let mut next = b + spec.recharge_efficiency * u.max(0.0);
    if u < 0.0 {
        next += u / spec.discharge_efficiency;
    }
    (spec.storage_efficiency * next).clamp(0.0, spec.capacity)
}

/// Realized delivery-interval trajectory under greedy storage control.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathOutcome {
    pub deficits: Vec<f64>,
    /// Per-stage supply `x = x_{R+1}/T`.
    pub supply: f64,
    pub u: Vec<f64>,
    /// Stored energy at the start of each stage; `b[0] = 0`.
    pub b: Vec<f64>,
    /// Stored energy after the last stage.
    pub b_final: f64,
    pub unserved: Vec<f64>,
    /// Per-stage curtailment, nonpositive.
    pub curtailment: Vec<f64>,
    /// Cumulative unserved energy through each stage.
    pub v: Vec<f64>,
    /// Cumulative curtailment through each stage, nonpositive.
    pub q: Vec<f64>,
    pub cost: f64,
}

impl PathOutcome {
    /// Stored energy after the control of stage `t` (0-based).
    pub fn b_after(&self, t: usize) -> f64 {
        self.b.get(t + 1).copied().unwrap_or(self.b_final)
    }

    /// Writes `t,D_t,u_t,b_t,unserved,V,Q` rows with 1-based `t`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| RldError::Domain(format!("path dump: {e}"));
        w.write_record(["t", "D_t", "u_t", "b_t", "unserved", "V", "Q"])
            .map_err(io)?;
        for t in 0..self.deficits.len() {
            w.write_record([
                (t + 1).to_string(),
                self.deficits[t].to_string(),
                self.u[t].to_string(),
                self.b[t].to_string(),
                self.unserved[t].to_string(),
                self.v[t].to_string(),
                self.q[t].to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| RldError::Domain(format!("path dump: {e}")))?;
        Ok(())
    }
}

/// Runs the delivery interval from an empty device with constant supply `x` per stage.
pub fn simulate_delivery(deficits: &[f64], x: f64, spec: &StorageSpec, voll: f64) -> PathOutcome {
    let n = deficits.len();
    let mut out = PathOutcome {
        deficits: deficits.to_vec(),
        supply: x,
        u: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        b_final: 0.0,
        unserved: Vec::with_capacity(n),
        curtailment: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        cost: 0.0,
    };
    let (mut b, mut v, mut q) = (0.0f64, 0.0f64, 0.0f64);
    for &d in deficits {
        let u = action_unchecked(b, d, x, spec);
        let net = d - x + u;
        out.b.push(b);
        out.u.push(u);
        out.unserved.push(net.max(0.0));
        out.curtailment.push(net.min(0.0));
        v += net.max(0.0);
        q += net.min(0.0);
        out.v.push(v);
        out.q.push(q);
        b = step_unchecked(b, u, spec);
    }
    out.b_final = b;
    out.cost = voll * v;
    out
}

/// Delivery cost only, without recording the trajectory.
pub fn delivery_cost(deficits: &[f64], x: f64, spec: &StorageSpec, voll: f64) -> f64 {
    let mut b = 0.0;
    let mut v = 0.0;
    for &d in deficits {
        let u = action_unchecked(b, d, x, spec);
        v += (d - x + u).max(0.0);
        b = step_unchecked(b, u, spec);
    }
    voll * v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ComplementarityKind {
    /// Unserved energy while the device still held energy.
    UnservedWithEnergy,
    /// Curtailment while the device still had headroom.
    CurtailedWithHeadroom,
    /// Balance identity between storage, net deficit, `V` and `Q` broken.
    BalanceIdentity,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplementarityViolation {
    /// 1-based stage.
    pub stage: usize,
    pub kind: ComplementarityKind,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VqReformulation {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub violations: Vec<ComplementarityViolation>,
}

/// Cumulative unserved/curtailment form of an ideal-storage path, with a check that
/// `V` grows only when the device is empty and `Q` falls only when it is full.
pub fn reformulate_vq(outcome: &PathOutcome, spec: &StorageSpec) -> Result<VqReformulation> {
    if !spec.is_ideal() {
        return Err(RldError::Unsupported(
            "V/Q reformulation requires ideal storage".into(),
        ));
    }
    let tol = spec.boundary_tol();
    let scale = outcome
        .deficits
        .iter()
        .fold(spec.capacity.max(outcome.supply.abs()), |m, d| {
            m.max(d.abs())
        })
        .max(1.0);
    let id_tol = 1e-12 * scale * (outcome.deficits.len() as f64 + 1.0);
    let mut violations = Vec::new();
    let mut cum_net = 0.0;
    for t in 0..outcome.deficits.len() {
        let after = outcome.b_after(t);
        if outcome.unserved[t] > 0.0 && after > tol {
            violations.push(ComplementarityViolation {
                stage: t + 1,
                kind: ComplementarityKind::UnservedWithEnergy,
                magnitude: after,
            });
        }
        if outcome.curtailment[t] < 0.0 && after < spec.capacity - tol {
            violations.push(ComplementarityViolation {
                stage: t + 1,
                kind: ComplementarityKind::CurtailedWithHeadroom,
                magnitude: spec.capacity - after,
            });
        }
        cum_net += outcome.deficits[t] - outcome.supply;
        let gap = after - (outcome.b[0] - cum_net + outcome.v[t] + outcome.q[t]);
        if gap.abs() > id_tol {
            violations.push(ComplementarityViolation {
                stage: t + 1,
                kind: ComplementarityKind::BalanceIdentity,
                magnitude: gap,
            });
        }
    }
    Ok(VqReformulation {
        v: outcome.v.clone(),
        q: outcome.q.clone(),
        violations,
    })
}

/// Per-path estimate of the derivative of the delivery cost with respect to the total
/// purchase `x_{R+1} = T·x`, for ideal storage.
///
/// Each unserved stage contributes its depth plus one: the number of stages since the
/// device last sat at a boundary, since one more unit of supply per stage accumulated
/// over that run would have been available.
pub fn per_path_subgradient_estimate(deficits: &[f64], x: f64, capacity: f64, voll: f64) -> f64 {
    let spec = StorageSpec::ideal(capacity);
    let (weight, _) = depth_weighted_shortfall(deficits, x, &spec);
    -(voll / deficits.len() as f64) * weight
}

/// `(Σ (h_t+1)·1{unserved_t>0}, delivery VOLL energy)` along one path.
pub(crate) fn depth_weighted_shortfall(deficits: &[f64], x: f64, spec: &StorageSpec) -> (f64, f64) {
    let tol = spec.boundary_tol();
    let mut b = 0.0;
    let mut depth = 0usize;
    let mut weight = 0.0;
    let mut v = 0.0;
    for &d in deficits {
        let u = action_unchecked(b, d, x, spec);
        let net = d - x + u;
        b = step_unchecked(b, u, spec);
        if net > 0.0 {
            weight += (depth + 1) as f64;
            v += net;
            depth = 0;
        } else if b >= spec.capacity - tol {
            depth = 0;
        } else {
            depth += 1;
        }
    }
    (weight, v)
}

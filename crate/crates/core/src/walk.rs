//! Rectangle probabilities and truncated moments of random walks with independent
//! steps, by forward propagation of the sub-density of the partial sum through each
//! interval.
//!
//! The sub-measure of `S_j` restricted to the event "every earlier partial sum stayed
//! inside its interval" is carried as a weighted point set. Atoms are exact; continuous
//! parts are Simpson nodes whose weights already include the density. Tail
//! probabilities and first moments at each step are then computed analytically from the
//! previous point set, so only the interior density is ever discretised.

use crate::error::{Result, RldError};
use crate::normal::{cdf, pdf, sf};

/// Distribution of one step of the walk.
#[derive(Clone, Debug, PartialEq)]
pub enum StepLaw {
    /// Zero-mean Gaussian with this standard deviation (zero means a point mass at 0).
    Gaussian(f64),
    /// Finite distribution as `(value, probability)` pairs.
    Atoms(Vec<(f64, f64)>),
}

impl StepLaw {
    fn variance(&self) -> f64 {
        match self {
            StepLaw::Gaussian(s) => s * s,
            StepLaw::Atoms(a) => {
                let m: f64 = a.iter().map(|(v, p)| v * p).sum();
                a.iter().map(|(v, p)| p * (v - m) * (v - m)).sum()
            }
        }
    }
}

/// Which event is required of the final partial sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinalMode {
    /// `lower < S_n ≤ upper`.
    Interval,
    /// `S_n > upper`.
    UpperTail,
    /// `S_n ≤ lower`.
    LowerTail,
}

/// Discretisation settings for the interior density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    /// Minimum number of Simpson nodes per interval (made odd).
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Node spacing is at most the smallest step std times this factor.
    pub spacing_factor: f64,
    /// The grid is clipped to this many standard deviations of the unconditioned sum.
    pub span_sd: f64,
    /// A chain stops once its remaining inside mass falls below this.
    pub mass_floor: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            min_nodes: 129,
            max_nodes: 4097,
            spacing_factor: 0.25,
            span_sd: 8.0,
            mass_floor: 1e-18,
        }
    }
}

impl QuadratureConfig {
    /// Twice the default density, for one-off probabilities where speed does not matter.
    pub fn fine() -> Self {
        Self {
            min_nodes: 257,
            spacing_factor: 0.125,
            ..Self::default()
        }
    }
}

/// Per-step results of one walk, with mass measured from a unit-probability start.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainProfile {
    /// `P(inside before j, S_j > upper_j)`.
    pub above: Vec<f64>,
    /// `E[S_j; inside before j, S_j > upper_j]`.
    pub above_moment: Vec<f64>,
    /// `P(inside through j)`.
    pub inside: Vec<f64>,
    pub inside_moment: Vec<f64>,
    /// `P(inside before j, S_j ≤ lower_j)`.
    pub below: Vec<f64>,
    pub below_moment: Vec<f64>,
}

impl ChainProfile {
    fn with_len(n: usize) -> Self {
        Self {
            above: vec![0.0; n],
            above_moment: vec![0.0; n],
            inside: vec![0.0; n],
            inside_moment: vec![0.0; n],
            below: vec![0.0; n],
            below_moment: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.above.len()
    }

    pub fn is_empty(&self) -> bool {
        self.above.is_empty()
    }
}

struct Measure {
    pos: Vec<f64>,
    w: Vec<f64>,
    /// `(first position, spacing)` when the points form a uniform grid.
    uniform: Option<(f64, f64)>,
}

impl Measure {
    fn atom(at: f64) -> Self {
        Self {
            pos: vec![at],
            w: vec![1.0],
            uniform: None,
        }
    }

    fn mass(&self) -> f64 {
        self.w.iter().sum()
    }
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    debug_assert!(n % 2 == 1 && n >= 3);
    (0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

struct StepStats {
    above: f64,
    above_moment: f64,
    below: f64,
    below_moment: f64,
    mass: f64,
    moment: f64,
}

fn gaussian_stats(m: &Measure, sigma: f64, lower: f64, upper: f64) -> StepStats {
    let mut st = StepStats {
        above: 0.0,
        above_moment: 0.0,
        below: 0.0,
        below_moment: 0.0,
        mass: 0.0,
        moment: 0.0,
    };
    for (&s, &q) in m.pos.iter().zip(&m.w) {
        st.mass += q;
        st.moment += q * s;
        if upper < f64::INFINITY {
            let z = (upper - s) / sigma;
            let tail = sf(z);
            st.above += q * tail;
            st.above_moment += q * (s * tail + sigma * pdf(z));
        }
        if lower > f64::NEG_INFINITY {
            let z = (lower - s) / sigma;
            let head = cdf(z);
            st.below += q * head;
            st.below_moment += q * (s * head - sigma * pdf(z));
        }
    }
    st
}

/// Density of `S + X` on a fresh uniform grid over `[a, b]`, times Simpson weights.
fn convolve_onto_grid(m: &Measure, sigma: f64, a: f64, b: f64, n: usize) -> Measure {
    let h = (b - a) / (n - 1) as f64;
    let pos: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
    let sw = simpson_weights(n, h);
    let inv = 1.0 / sigma;
    let mut dens = vec![0.0; n];
    let toeplitz = match m.uniform {
        Some((s0, hs)) if (hs - h).abs() <= 1e-12 * h => Some(s0),
        _ => None,
    };
    if let Some(s0) = toeplitz {
        // kernel depends only on the index difference
        let k = m.pos.len();
        let kernel: Vec<f64> = (0..n + k - 1)
            .map(|d| {
                let diff = a - s0 + h * (d as f64 - (k as f64 - 1.0));
                pdf(diff * inv) * inv
            })
            .collect();
        for (i, out) in dens.iter_mut().enumerate() {
            let base = i + k - 1;
            let mut acc = 0.0;
            for (j, &q) in m.w.iter().enumerate() {
                acc += q * kernel[base - j];
            }
            *out = acc;
        }
    } else {
        for (i, out) in dens.iter_mut().enumerate() {
            let y = pos[i];
            let mut acc = 0.0;
            for (&s, &q) in m.pos.iter().zip(&m.w) {
                acc += q * pdf((y - s) * inv);
            }
            *out = acc * inv;
        }
    }
    let w = dens.iter().zip(&sw).map(|(d, s)| d * s).collect();
    Measure {
        pos,
        w,
        uniform: Some((a, h)),
    }
}

fn merge_sorted(pos: Vec<f64>, w: Vec<f64>) -> Measure {
    let mut idx: Vec<usize> = (0..pos.len()).collect();
    idx.sort_by(|&i, &j| pos[i].total_cmp(&pos[j]));
    let mut out_p: Vec<f64> = Vec::with_capacity(pos.len());
    let mut out_w: Vec<f64> = Vec::with_capacity(pos.len());
    for i in idx {
        if w[i] == 0.0 {
            continue;
        }
        match out_p.last() {
            Some(&last) if last == pos[i] => *out_w.last_mut().unwrap() += w[i],
            _ => {
                out_p.push(pos[i]);
                out_w.push(w[i]);
            }
        }
    }
    Measure {
        pos: out_p,
        w: out_w,
        uniform: None,
    }
}

/// Forward recursion over every step, recording tail and inside masses and moments.
pub fn chain_profile(
    steps: &[StepLaw],
    lower: &[f64],
    upper: &[f64],
    cfg: &QuadratureConfig,
) -> ChainProfile {
    let n = steps.len();
    let mut prof = ChainProfile::with_len(n);
    let min_sigma = steps
        .iter()
        .filter_map(|s| match s {
            StepLaw::Gaussian(v) if *v > 0.0 => Some(*v),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    let mut measure = Measure::atom(0.0);
    let mut var = 0.0;
    for j in 0..n {
        let (l, u) = (lower[j], upper[j]);
        var += steps[j].variance();
        match &steps[j] {
            StepLaw::Gaussian(sigma) if *sigma > 0.0 => {
                let st = gaussian_stats(&measure, *sigma, l, u);
                prof.above[j] = st.above;
                prof.above_moment[j] = st.above_moment;
                prof.below[j] = st.below;
                prof.below_moment[j] = st.below_moment;
                let inside = if l < u {
                    (st.mass - st.above - st.below).max(0.0)
                } else {
                    0.0
                };
                prof.inside[j] = inside;
                prof.inside_moment[j] = if l < u {
                    st.moment - st.above_moment - st.below_moment
                } else {
                    0.0
                };
                if j + 1 == n {
                    break;
                }
                let span = cfg.span_sd * var.sqrt();
                let a = l.max(-span);
                let b = u.min(span);
                if inside < cfg.mass_floor || !(a < b) {
                    break;
                }
                let h_max = min_sigma * cfg.spacing_factor;
                let mut nodes = ((b - a) / h_max).ceil() as usize + 1;
                nodes = nodes.clamp(cfg.min_nodes, cfg.max_nodes);
                if nodes % 2 == 0 {
                    nodes += 1;
                }
                let mut next = convolve_onto_grid(&measure, *sigma, a, b, nodes);
                let grid_mass = next.mass();
                if grid_mass > 0.0 {
                    let scale = inside / grid_mass;
                    next.w.iter_mut().for_each(|w| *w *= scale);
                }
                measure = next;
            }
            law => {
                let atoms: Vec<(f64, f64)> = match law {
                    StepLaw::Atoms(a) => a.clone(),
                    _ => vec![(0.0, 1.0)],
                };
                let mut pos = Vec::with_capacity(measure.pos.len() * atoms.len());
                let mut w = Vec::with_capacity(pos.capacity());
                for (&s, &q) in measure.pos.iter().zip(&measure.w) {
                    for &(v, p) in &atoms {
                        let y = s + v;
                        let qp = q * p;
                        if y > u {
                            prof.above[j] += qp;
                            prof.above_moment[j] += qp * y;
                        } else if y <= l {
                            prof.below[j] += qp;
                            prof.below_moment[j] += qp * y;
                        } else {
                            prof.inside[j] += qp;
                            prof.inside_moment[j] += qp * y;
                            pos.push(y);
                            w.push(qp);
                        }
                    }
                }
                if j + 1 == n || prof.inside[j] < cfg.mass_floor {
                    break;
                }
                measure = merge_sorted(pos, w);
            }
        }
    }
    prof
}

fn check_inputs(step_stds: &[f64], lower: &[f64], upper: &[f64]) -> Result<()> {
    if step_stds.is_empty() {
        return Err(RldError::validation(
            "step_stds",
            "at least one step required",
        ));
    }
    if lower.len() != step_stds.len() || upper.len() != step_stds.len() {
        return Err(RldError::validation(
            "bounds",
            "lower, upper and step_stds must have equal lengths",
        ));
    }
    if let Some(i) = step_stds
        .iter()
        .position(|s| !(*s >= 0.0) || !s.is_finite())
    {
        return Err(RldError::validation(
            format!("step_stds[{i}]"),
            "must be finite and >= 0",
        ));
    }
    if let Some(i) =
        (0..lower.len()).find(|&i| lower[i].is_nan() || upper[i].is_nan() || lower[i] > upper[i])
    {
        return Err(RldError::validation(
            format!("bounds[{i}]"),
            "lower must not exceed upper",
        ));
    }
    Ok(())
}

fn final_pair(prof: &ChainProfile, mode: FinalMode) -> (f64, f64) {
    let j = prof.len() - 1;
    match mode {
        FinalMode::Interval => (prof.inside[j], prof.inside_moment[j]),
        FinalMode::UpperTail => (prof.above[j], prof.above_moment[j]),
        FinalMode::LowerTail => (prof.below[j], prof.below_moment[j]),
    }
}

/// `P(lower_j < S_j ≤ upper_j for j < n, and the final condition on S_n)` for a
/// Gaussian random walk with the given step stds.
pub fn walk_rectangle_prob(
    step_stds: &[f64],
    lower: &[f64],
    upper: &[f64],
    final_mode: FinalMode,
) -> Result<f64> {
    check_inputs(step_stds, lower, upper)?;
    let steps: Vec<StepLaw> = step_stds.iter().map(|&s| StepLaw::Gaussian(s)).collect();
    let prof = chain_profile(&steps, lower, upper, &QuadratureConfig::fine());
    Ok(final_pair(&prof, final_mode).0.clamp(0.0, 1.0))
}

/// Conditional mean of `S_n` given the same event as [`walk_rectangle_prob`].
pub fn truncated_walk_mean(
    step_stds: &[f64],
    lower: &[f64],
    upper: &[f64],
    final_mode: FinalMode,
) -> Result<f64> {
    check_inputs(step_stds, lower, upper)?;
    let steps: Vec<StepLaw> = step_stds.iter().map(|&s| StepLaw::Gaussian(s)).collect();
    let prof = chain_profile(&steps, lower, upper, &QuadratureConfig::fine());
    let (p, m) = final_pair(&prof, final_mode);
    if !(p > 0.0) {
        return Err(RldError::ZeroProbability(
            "conditioning event has zero probability".into(),
        ));
    }
    Ok(m / p)
}

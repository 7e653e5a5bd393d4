//! Domain types shared by every engine: the market ladder, the storage device,
//! the delivery-interval forecast and the horizon-dependent forecast error curve.

use crate::error::{Result, RldError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Buy,
    Sell,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Buy => f.write_str("buy"),
            Direction::Sell => f.write_str("sell"),
        }
    }
}

/// One recourse market ahead of delivery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketStage {
    pub lead_time_hours: f64,
    /// Currency per unit of energy.
    pub price: f64,
    pub direction: Direction,
}

impl MarketStage {
    pub fn buy(lead_time_hours: f64, price: f64) -> Self {
        Self {
            lead_time_hours,
            price,
            direction: Direction::Buy,
        }
    }

    pub fn sell(lead_time_hours: f64, price: f64) -> Self {
        Self {
            lead_time_hours,
            price,
            direction: Direction::Sell,
        }
    }
}

/// Ordered recourse stages `r = 1..=R`, earliest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarketLadder {
    stages: Vec<MarketStage>,
}

impl MarketLadder {
    pub fn new(stages: Vec<MarketStage>) -> Self {
        Self { stages }
    }

    /// Buy-only ladder from `(lead_time_hours, price)` pairs.
    pub fn buy_only(stages: &[(f64, f64)]) -> Self {
        Self::new(
            stages
                .iter()
                .map(|&(l, p)| MarketStage::buy(l, p))
                .collect(),
        )
    }

    pub fn stages(&self) -> &[MarketStage] {
        &self.stages
    }

    /// Number of dispatch stages `R`.
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Stage `r`, 1-based.
    pub fn stage(&self, r: usize) -> &MarketStage {
        &self.stages[r - 1]
    }

    pub fn max_price(&self) -> f64 {
        self.stages
            .iter()
            .map(|s| s.price)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PriceViolation {
    EmptyLadder,
    NonPositiveBuyPrice {
        stage: usize,
        price: f64,
    },
    /// Buy prices must increase toward delivery.
    BuyOrder {
        earlier: usize,
        later: usize,
    },
    /// Sell prices must decrease toward delivery.
    SellOrder {
        earlier: usize,
        later: usize,
    },
    /// An earlier buy must cost more than a later sell pays.
    Arbitrage {
        buy: usize,
        sell: usize,
    },
    LeadTimeOrder {
        earlier: usize,
        later: usize,
    },
    VollNotAboveMaxPrice {
        voll: f64,
        max_price: f64,
    },
}

impl fmt::Display for PriceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PriceViolation::EmptyLadder => write!(f, "ladder has no stages"),
            PriceViolation::NonPositiveBuyPrice { stage, price } => {
                write!(f, "buy stage {stage} has non-positive price {price}")
            }
            PriceViolation::BuyOrder { earlier, later } => {
                write!(f, "c_{earlier} < c_{later} required for buy stages")
            }
            PriceViolation::SellOrder { earlier, later } => {
                write!(f, "c_{earlier} > c_{later} required for sell stages")
            }
            PriceViolation::Arbitrage { buy, sell } => {
                write!(f, "no-arbitrage c_{buy} (buy) > c_{sell} (sell) required")
            }
            PriceViolation::LeadTimeOrder { earlier, later } => {
                write!(f, "lead time of stage {earlier} must exceed stage {later}")
            }
            PriceViolation::VollNotAboveMaxPrice { voll, max_price } => {
                write!(
                    f,
                    "VOLL {voll} must exceed the highest ladder price {max_price}"
                )
            }
        }
    }
}

/// Collects every violated ordering constraint; an empty list means the ladder is usable.
pub fn validate_ladder(ladder: &MarketLadder, cost: &CostModel) -> Vec<PriceViolation> {
    let stages = ladder.stages();
    if stages.is_empty() {
        return vec![PriceViolation::EmptyLadder];
    }
    let mut out = Vec::new();
    for (i, s) in stages.iter().enumerate() {
        if s.direction == Direction::Buy && s.price <= 0.0 {
            out.push(PriceViolation::NonPositiveBuyPrice {
                stage: i + 1,
                price: s.price,
            });
        }
    }
    for i in 0..stages.len() {
        for j in i + 1..stages.len() {
            let (a, b) = (&stages[i], &stages[j]);
            let (r1, r2) = (i + 1, j + 1);
            match (a.direction, b.direction) {
                (Direction::Buy, Direction::Buy) if a.price >= b.price => {
                    out.push(PriceViolation::BuyOrder {
                        earlier: r1,
                        later: r2,
                    })
                }
                (Direction::Sell, Direction::Sell) if a.price <= b.price => {
                    out.push(PriceViolation::SellOrder {
                        earlier: r1,
                        later: r2,
                    })
                }
                (Direction::Buy, Direction::Sell) if a.price <= b.price => {
                    out.push(PriceViolation::Arbitrage { buy: r1, sell: r2 })
                }
                _ => {}
            }
            if a.lead_time_hours <= b.lead_time_hours {
                out.push(PriceViolation::LeadTimeOrder {
                    earlier: r1,
                    later: r2,
                });
            }
        }
    }
    let max_price = ladder.max_price();
    if cost.voll <= max_price {
        out.push(PriceViolation::VollNotAboveMaxPrice {
            voll: cost.voll,
            max_price,
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Value of lost load, currency per unit of unserved energy.
    pub voll: f64,
}

impl CostModel {
    pub fn new(voll: f64) -> Self {
        Self { voll }
    }
}

/// Fast storage: capacity plus storage, recharge and discharge efficiencies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    #[serde(rename = "B")]
    pub capacity: f64,
    #[serde(rename = "lambda", default = "one")]
    pub storage_efficiency: f64,
    #[serde(rename = "mu", default = "one")]
    pub recharge_efficiency: f64,
    #[serde(rename = "nu", default = "one")]
    pub discharge_efficiency: f64,
}

fn one() -> f64 {
    1.0
}

impl StorageSpec {
    pub fn ideal(capacity: f64) -> Self {
        Self {
            capacity,
            storage_efficiency: 1.0,
            recharge_efficiency: 1.0,
            discharge_efficiency: 1.0,
        }
    }

    pub fn with_efficiencies(capacity: f64, lambda: f64, mu: f64, nu: f64) -> Self {
        Self {
            capacity,
            storage_efficiency: lambda,
            recharge_efficiency: mu,
            discharge_efficiency: nu,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.storage_efficiency == 1.0
            && self.recharge_efficiency == 1.0
            && self.discharge_efficiency == 1.0
    }

    /// Tolerance used to decide whether the device is empty or full.
    pub fn boundary_tol(&self) -> f64 {
        1e-12 * self.capacity.max(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity >= 0.0) || !self.capacity.is_finite() {
            return Err(RldError::validation(
                "storage.B",
                format!("capacity must be finite and >= 0, got {}", self.capacity),
            ));
        }
        for (name, v) in [
            ("storage.lambda", self.storage_efficiency),
            ("storage.mu", self.recharge_efficiency),
            ("storage.nu", self.discharge_efficiency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RldError::validation(
                    name,
                    format!("must lie in [0,1], got {v}"),
                ));
            }
        }
        if self.capacity > 0.0
            && (self.recharge_efficiency == 0.0 || self.discharge_efficiency == 0.0)
        {
            return Err(RldError::validation(
                "storage",
                "recharge and discharge efficiencies must be positive when B > 0",
            ));
        }
        Ok(())
    }
}

/// Per-delivery-stage predicted deficit and independent Gaussian error std,
/// as seen from one dispatch stage.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastModel {
    d_hat: Vec<f64>,
    sigma: Vec<f64>,
}

impl ForecastModel {
    pub fn new(d_hat: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if d_hat.is_empty() {
            return Err(RldError::validation(
                "T",
                "need at least one delivery stage",
            ));
        }
        if d_hat.len() != sigma.len() {
            return Err(RldError::validation(
                "sigma",
                format!("length {} differs from T = {}", sigma.len(), d_hat.len()),
            ));
        }
        if let Some(i) = sigma.iter().position(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(RldError::validation(
                format!("sigma[{i}]"),
                "must be finite and >= 0",
            ));
        }
        if let Some(i) = d_hat.iter().position(|d| !d.is_finite()) {
            return Err(RldError::validation(
                format!("d_hat[{i}]"),
                "must be finite",
            ));
        }
        Ok(Self { d_hat, sigma })
    }

    /// `D̂_t ≡ d`, `σ_t ≡ sigma` over `t` stages.
    pub fn constant(stages: usize, d: f64, sigma: f64) -> Self {
        Self::new(vec![d; stages], vec![sigma; stages]).expect("valid constant forecast")
    }

    pub fn stages(&self) -> usize {
        self.d_hat.len()
    }

    pub fn d_hat(&self) -> &[f64] {
        &self.d_hat
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn is_constant_profile(&self) -> bool {
        self.d_hat.iter().all(|&d| d == self.d_hat[0])
            && self.sigma.iter().all(|&s| s == self.sigma[0])
    }

    /// Predicted total deficit over the delivery interval.
    pub fn total_mean(&self) -> f64 {
        self.d_hat.iter().sum()
    }

    /// Variance of the total deficit over the delivery interval.
    pub fn total_variance(&self) -> f64 {
        self.sigma.iter().map(|s| s * s).sum()
    }

    /// Same error model with every predicted deficit moved by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            d_hat: self.d_hat.iter().map(|d| d + delta).collect(),
            sigma: self.sigma.clone(),
        }
    }
}

/// Standard deviation of the total-deficit forecast error as a function of lead time.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastErrorCurve {
    /// `(horizon_hours, sigma)` sorted by decreasing horizon.
    knots: Vec<(f64, f64)>,
}

impl ForecastErrorCurve {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(RldError::validation("curve", "no rows"));
        }
        for (i, &(h, s)) in knots.iter().enumerate() {
            if !h.is_finite() || !s.is_finite() || h < 0.0 || s < 0.0 {
                return Err(RldError::validation(
                    format!("curve[{i}]"),
                    "horizon and sigma must be finite and >= 0",
                ));
            }
        }
        for (i, w) in knots.windows(2).enumerate() {
            if w[1].0 >= w[0].0 {
                return Err(RldError::validation(
                    format!("curve[{}].horizon_hours", i + 1),
                    "rows must be sorted by strictly decreasing horizon",
                ));
            }
            if w[1].1 > w[0].1 {
                return Err(RldError::validation(
                    format!("curve[{}].sigma", i + 1),
                    "sigma must not increase as the horizon shrinks",
                ));
            }
        }
        Ok(Self { knots })
    }

    /// Reads `horizon_hours,sigma` rows.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let mut reader = csv::Reader::from_path(path).map_err(|e| RldError::Parse {
            path: display.clone(),
            message: e.to_string(),
        })?;
        Self::from_reader(&mut reader, &display)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        Self::from_reader(&mut reader, "<string>")
    }

    fn from_reader<R: std::io::Read>(reader: &mut csv::Reader<R>, path: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            horizon_hours: f64,
            sigma: f64,
        }
        let parse = |message: String| RldError::Parse {
            path: path.to_string(),
            message,
        };
        let headers = reader.headers().map_err(|e| parse(e.to_string()))?.clone();
        for col in ["horizon_hours", "sigma"] {
            if !headers.iter().any(|h| h.trim() == col) {
                return Err(parse(format!("missing `{col}` column")));
            }
        }
        let mut knots = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| parse(format!("row {}: {e}", i + 1)))?;
            knots.push((row.horizon_hours, row.sigma));
        }
        Self::new(knots)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn max_horizon(&self) -> f64 {
        self.knots[0].0
    }

    pub fn min_horizon(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    /// σ(h)², linear in variance between knots.
    pub fn variance_at(&self, horizon: f64) -> Result<f64> {
        let (lo, hi) = (self.min_horizon(), self.max_horizon());
        if !(horizon >= lo && horizon <= hi) {
            return Err(RldError::HorizonOutOfRange {
                horizon,
                min: lo,
                max: hi,
            });
        }
        if self.knots.len() == 1 {
            return Ok(self.knots[0].1.powi(2));
        }
        // knots are decreasing in horizon
        let idx = self
            .knots
            .windows(2)
            .position(|w| horizon <= w[0].0 && horizon >= w[1].0)
            .expect("horizon bracketed");
        let (h0, s0) = self.knots[idx];
        let (h1, s1) = self.knots[idx + 1];
        let w = (h0 - horizon) / (h0 - h1);
        Ok((1.0 - w) * s0 * s0 + w * s1 * s1)
    }

    pub fn sigma_at(&self, horizon: f64) -> Result<f64> {
        self.variance_at(horizon).map(f64::sqrt)
    }
}

/// Variance of the forecast information revealed between stage `r − 1` and stage `r`.
///
/// Stage 0 is taken to sit at the curve's largest horizon, so the values telescope to
/// `σ(h_max)² − σ(t_R)²` over `r = 1..=R`.
pub fn stage_error_variance(
    curve: &ForecastErrorCurve,
    r: usize,
    ladder: &MarketLadder,
) -> Result<f64> {
    if r == 0 || r > ladder.len() {
        return Err(RldError::Domain(format!(
            "stage index {r} outside 1..={}",
            ladder.len()
        )));
    }
    let prev = if r == 1 {
        curve.max_horizon()
    } else {
        ladder.stage(r - 1).lead_time_hours
    };
    let now = ladder.stage(r).lead_time_hours;
    Ok((curve.variance_at(prev)? - curve.variance_at(now)?).max(0.0))
}

/// Split of the last dispatch stage's residual variance into the part that moves the
/// interval mean and the part that fluctuates within the interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeliveryVariance {
    /// Variance of the shift of the whole-interval mean revealed after the last market.
    pub mean_error: f64,
    /// Variance of the within-interval walk, `σ²_{R+1}`.
    pub within_interval: f64,
}

pub fn delivery_variance(
    curve: &ForecastErrorCurve,
    ladder: &MarketLadder,
    mean_share: f64,
) -> Result<DeliveryVariance> {
    let last = ladder
        .stages()
        .last()
        .ok_or_else(|| RldError::validation("ladder", "empty"))?;
    let v = curve.variance_at(last.lead_time_hours)?;
    Ok(DeliveryVariance {
        mean_error: mean_share * v,
        within_interval: (1.0 - mean_share) * v,
    })
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| RldError::Io {
        path: path.display().to_string(),
        source,
    })
}

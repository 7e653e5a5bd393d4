//! Scenario configuration: JSON document plus a forecast-error curve CSV.

use crate::error::{Result, RldError};
use crate::model::{
    delivery_variance, read_file, stage_error_variance, validate_ladder, CostModel,
    DeliveryVariance, ForecastErrorCurve, ForecastModel, MarketLadder, MarketStage, StorageSpec,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// A complete, validated dispatch problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub ladder: MarketLadder,
    pub storage: StorageSpec,
    pub cost: CostModel,
    pub curve: ForecastErrorCurve,
    /// Fraction of the last-stage residual variance that shifts the interval mean.
    pub mean_share: f64,
    /// Per-delivery-stage predicted deficit as seen from the first dispatch stage.
    pub d_hat: Vec<f64>,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum DHat {
    Constant(f64),
    Profile(Vec<f64>),
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    ladder: Vec<MarketStage>,
    voll: f64,
    storage: StorageSpec,
    #[serde(rename = "T")]
    stages: usize,
    d_hat: DHat,
    curve_file: PathBuf,
    mean_share: f64,
}

impl Scenario {
    /// Builds and validates a scenario from parts.
    pub fn new(
        ladder: MarketLadder,
        storage: StorageSpec,
        cost: CostModel,
        curve: ForecastErrorCurve,
        mean_share: f64,
        d_hat: Vec<f64>,
    ) -> Result<Self> {
        let s = Self {
            ladder,
            storage,
            cost,
            curve,
            mean_share,
            d_hat,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let violations = validate_ladder(&self.ladder, &self.cost);
        if !violations.is_empty() {
            let msg = violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(RldError::validation("ladder", msg));
        }
        self.storage.validate()?;
        if !(0.0..=1.0).contains(&self.mean_share) {
            return Err(RldError::validation(
                "mean_share",
                format!("must lie in [0,1], got {}", self.mean_share),
            ));
        }
        if self.d_hat.is_empty() {
            return Err(RldError::validation("T", "must be at least 1"));
        }
        if let Some(i) = self.d_hat.iter().position(|d| !d.is_finite()) {
            return Err(RldError::validation(
                format!("d_hat[{i}]"),
                "must be finite",
            ));
        }
        for (i, s) in self.ladder.stages().iter().enumerate() {
            if let Err(e) = self.curve.variance_at(s.lead_time_hours) {
                return Err(RldError::validation(
                    format!("ladder[{i}].lead_time_hours"),
                    e.to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Number of delivery stages `T`.
    pub fn stages(&self) -> usize {
        self.d_hat.len()
    }

    /// Number of dispatch stages `R`.
    pub fn dispatch_stages(&self) -> usize {
        self.ladder.len()
    }

    /// Predicted deficit over the whole delivery interval, `T·D̂` for a flat profile.
    pub fn total_mean(&self) -> f64 {
        self.d_hat.iter().sum()
    }

    pub fn delivery_variance(&self) -> DeliveryVariance {
        delivery_variance(&self.curve, &self.ladder, self.mean_share)
            .expect("scenario validated against curve range")
    }

    /// Std of the forecast update revealed at stage `r` (1-based). Stage 1's update is
    /// already absorbed in the stage-1 forecast, so only `r ≥ 2` is random in simulation.
    pub fn increment_std(&self, r: usize) -> f64 {
        stage_error_variance(&self.curve, r, &self.ladder)
            .expect("scenario validated against curve range")
            .sqrt()
    }

    /// Increment stds for stages `2..=R`, in order.
    pub fn increment_stds(&self) -> Vec<f64> {
        (2..=self.dispatch_stages())
            .map(|r| self.increment_std(r))
            .collect()
    }

    /// Per-delivery-stage error std of the within-interval walk.
    pub fn stage_sigma(&self) -> f64 {
        (self.delivery_variance().within_interval / self.stages() as f64).sqrt()
    }

    pub fn mean_error_std(&self) -> f64 {
        self.delivery_variance().mean_error.sqrt()
    }

    /// Forecast of the delivery interval used by the terminal cost, centred on the
    /// stage-1 profile.
    pub fn forecast(&self) -> ForecastModel {
        let s = self.stage_sigma();
        ForecastModel::new(self.d_hat.clone(), vec![s; self.stages()]).expect("scenario validated")
    }

    /// Same scenario with a flat profile whose interval total is `total`.
    pub fn with_total_mean(&self, total: f64) -> Self {
        let t = self.stages();
        Self {
            d_hat: vec![total / t as f64; t],
            ..self.clone()
        }
    }

    pub fn with_capacity(&self, capacity: f64) -> Result<Self> {
        let s = Self {
            storage: StorageSpec {
                capacity,
                ..self.storage
            },
            ..self.clone()
        };
        s.storage.validate()?;
        Ok(s)
    }
}

/// Loads and validates a scenario; `curve_file` is resolved relative to the JSON file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| RldError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let curve_path = if file.curve_file.is_absolute() {
        file.curve_file.clone()
    } else {
        path.parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&file.curve_file)
    };
    let curve = ForecastErrorCurve::from_csv_path(&curve_path)?;
    if file.stages == 0 {
        return Err(RldError::validation("T", "must be at least 1"));
    }
    let d_hat = match file.d_hat {
        DHat::Constant(d) => vec![d; file.stages],
        DHat::Profile(v) => {
            if v.len() != file.stages {
                return Err(RldError::validation(
                    "d_hat",
                    format!(
                        "profile length {} differs from T = {}",
                        v.len(),
                        file.stages
                    ),
                ));
            }
            v
        }
    };
    Scenario::new(
        MarketLadder::new(file.ladder),
        file.storage,
        CostModel::new(file.voll),
        curve,
        file.mean_share,
        d_hat,
    )
}

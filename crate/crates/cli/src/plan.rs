use std::fmt;

use junction_core::sim::{ConfigError, Pipeline, SimConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan: {0}")]
    Parse(String),
    #[error("plan field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// The swept scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Vehicles,
    Volume,
}

impl Axis {
    pub fn default_points(self) -> Vec<f64> {
        match self {
            Axis::Vehicles => (1..=5).map(|k| f64::from(20 * k)).collect(),
            Axis::Volume => (1..=5).map(|k| f64::from(500 * k)).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Vehicles => "vehicles",
            Axis::Volume => "volume",
        }
    }

    /// `base` with the axis set to `value`.
    pub fn apply(self, base: &SimConfig, value: f64) -> SimConfig {
        let mut cfg = base.clone();
        match self {
            Axis::Vehicles => cfg.vehicles = value as usize,
            Axis::Volume => cfg.volume = value,
        }
        cfg
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    axis: Axis,
    points: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    algorithms: Vec<String>,
    #[serde(default)]
    base: SimConfig,
}

/// A sweep over one axis. Every algorithm sees the same seeds at every point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub axis: Axis,
    pub points: Vec<f64>,
    pub seeds: Vec<u64>,
    /// The first entry is compared against each of the others.
    pub algorithms: Vec<Pipeline>,
    pub base: SimConfig,
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self, PlanError> {
        let raw: RawPlan = toml::from_str(text).map_err(|e| PlanError::Parse(e.to_string()))?;
        let algorithms = raw
            .algorithms
            .iter()
            .map(|a| a.parse::<Pipeline>())
            .collect::<Result<Vec<_>, _>>()?;
        let plan = Self {
            axis: raw.axis,
            points: raw.points.unwrap_or_else(|| raw.axis.default_points()),
            seeds: raw.seeds.unwrap_or_else(|| (1..=10).collect()),
            algorithms,
            base: raw.base,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let empty = |field| PlanError::Invalid { field, reason: "must not be empty".into() };
        if self.points.is_empty() {
            return Err(empty("points"));
        }
        if self.seeds.is_empty() {
            return Err(empty("seeds"));
        }
        if self.algorithms.is_empty() {
            return Err(empty("algorithms"));
        }
        if self.axis == Axis::Vehicles {
            if let Some(p) = self.points.iter().find(|p| p.fract() != 0.0 || **p < 1.0) {
                return Err(PlanError::Invalid {
                    field: "points",
                    reason: format!("vehicle count {p} is not a positive integer"),
                });
            }
        }
        for &p in &self.points {
            self.axis.apply(&self.base, p).validate()?;
        }
        Ok(())
    }

    /// Scenario for one axis point, seed and algorithm.
    pub fn config(&self, point: f64, seed: u64, algorithm: Pipeline) -> SimConfig {
        let mut cfg = self.axis.apply(&self.base, point).with_pipeline(algorithm);
        cfg.seed = seed;
        cfg
    }

    pub fn runs(&self) -> usize {
        self.points.len() * self.seeds.len() * self.algorithms.len()
    }
}

//! Scenario configuration, loaded from TOML.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflictgraph::ReachabilityParams;
use crate::control::{ControllerGains, Limits};
use crate::geometry::IntersectionSpec;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown {kind} `{value}` (expected one of: {expected})")]
    UnknownVariant {
        kind: &'static str,
        value: String,
        expected: &'static str,
    },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Stage-one lane changer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaneChangeMode {
    /// Group formation with assignment and conflict-based search.
    Fclc,
    /// Single-vehicle gap acceptance.
    Greedy,
}

/// Stage-two crossing policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    Mcc,
    Fifo,
    ConstantTl,
}

impl LaneChangeMode {
    pub const ALL: [LaneChangeMode; 2] = [LaneChangeMode::Fclc, LaneChangeMode::Greedy];

    pub fn name(self) -> &'static str {
        match self {
            LaneChangeMode::Fclc => "fclc",
            LaneChangeMode::Greedy => "greedy",
        }
    }
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [SchedulerKind::Mcc, SchedulerKind::Fifo, SchedulerKind::ConstantTl];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Mcc => "mcc",
            SchedulerKind::Fifo => "fifo",
            SchedulerKind::ConstantTl => "constant-tl",
        }
    }
}

impl fmt::Display for LaneChangeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LaneChangeMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fclc" => Ok(LaneChangeMode::Fclc),
            "greedy" | "greedy-lc" => Ok(LaneChangeMode::Greedy),
            _ => Err(ConfigError::UnknownVariant {
                kind: "lane changer",
                value: s.to_string(),
                expected: "fclc, greedy",
            }),
        }
    }
}

impl FromStr for SchedulerKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mcc" => Ok(SchedulerKind::Mcc),
            "fifo" => Ok(SchedulerKind::Fifo),
            "constant-tl" | "constanttl" | "tl" => Ok(SchedulerKind::ConstantTl),
            _ => Err(ConfigError::UnknownVariant {
                kind: "scheduler",
                value: s.to_string(),
                expected: "mcc, fifo, constant-tl",
            }),
        }
    }
}

/// A lane changer paired with a crossing policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pipeline {
    pub lane_change: LaneChangeMode,
    pub scheduler: SchedulerKind,
}

impl Pipeline {
    pub const fn new(lane_change: LaneChangeMode, scheduler: SchedulerKind) -> Self {
        Self { lane_change, scheduler }
    }

    /// The proposed pipeline: group lane changing with clique-cover crossing.
    pub const PROPOSED: Pipeline = Pipeline::new(LaneChangeMode::Fclc, SchedulerKind::Mcc);

    /// Every lane changer paired with every scheduler.
    pub const ALL: [Pipeline; 6] = [
        Pipeline::new(LaneChangeMode::Fclc, SchedulerKind::Mcc),
        Pipeline::new(LaneChangeMode::Fclc, SchedulerKind::Fifo),
        Pipeline::new(LaneChangeMode::Fclc, SchedulerKind::ConstantTl),
        Pipeline::new(LaneChangeMode::Greedy, SchedulerKind::Mcc),
        Pipeline::new(LaneChangeMode::Greedy, SchedulerKind::Fifo),
        Pipeline::new(LaneChangeMode::Greedy, SchedulerKind::ConstantTl),
    ];

    pub fn is_proposed(self) -> bool {
        self == Self::PROPOSED
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.lane_change, self.scheduler)
    }
}

impl FromStr for Pipeline {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lc, sc) = s.split_once('+').ok_or_else(|| ConfigError::UnknownVariant {
            kind: "pipeline",
            value: s.to_string(),
            expected: "<fclc|greedy>+<mcc|fifo|constant-tl>",
        })?;
        Ok(Pipeline::new(lc.parse()?, sc.parse()?))
    }
}

/// Group formation and lane-change timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcsParams {
    /// Vehicles per planning group and leg.
    pub group_size: usize,
    /// Duration of one grid step, s.
    pub step_time: f64,
    /// Duration of one lane-change maneuver, s.
    pub lane_change_time: f64,
    /// A group that has not filled up is planned this long after its first
    /// member entered, s.
    pub group_timeout: f64,
}

impl Default for RcsParams {
    fn default() -> Self {
        Self {
            group_size: 3,
            step_time: 4.0,
            lane_change_time: 3.0,
            group_timeout: 9.0,
        }
    }
}

/// Fixed-time signal plan of the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalParams {
    /// Green time of each of the four phases, s.
    pub green: f64,
    /// All-red clearance after each phase, s.
    pub clearance: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self {
            green: 35.0,
            clearance: 5.0,
        }
    }
}

/// Car-following safety envelope shared by all pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    /// Front-to-front distance kept to a stopped predecessor, m.
    pub min_gap: f64,
    /// Deceleration assumed when sizing the envelope, m/s^2.
    pub comfort_decel: f64,
    /// Vehicle length, used for junction clearance, m.
    pub vehicle_length: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            min_gap: 20.0,
            comfort_decel: 3.0,
            vehicle_length: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Vehicles generated per run.
    pub vehicles: usize,
    /// Mean demand per approach, veh/h.
    pub volume: f64,
    pub lane_change: LaneChangeMode,
    pub scheduler: SchedulerKind,
    /// Integration step, s.
    pub dt: f64,
    /// Hard stop on simulated time, s.
    pub max_time: f64,
    /// A run with vehicles present and no motion for this long is deadlocked, s.
    pub stall_time: f64,
    pub intersection: IntersectionSpec,
    pub controller: ControllerGains,
    pub limits: Limits,
    pub rcs: RcsParams,
    pub signal: SignalParams,
    pub safety: SafetyParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            vehicles: 50,
            volume: 2000.0,
            lane_change: LaneChangeMode::Fclc,
            scheduler: SchedulerKind::Mcc,
            dt: 0.1,
            max_time: 3600.0,
            stall_time: 300.0,
            intersection: IntersectionSpec::default(),
            controller: ControllerGains::default(),
            limits: Limits::default(),
            rcs: RcsParams::default(),
            signal: SignalParams::default(),
            safety: SafetyParams::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a positive number, got {v}")))
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline::new(self.lane_change, self.scheduler)
    }

    pub fn with_pipeline(mut self, p: Pipeline) -> Self {
        self.lane_change = p.lane_change;
        self.scheduler = p.scheduler;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.vehicles == 0 {
            return Err(invalid("vehicles", "must be at least 1"));
        }
        positive("volume", self.volume)?;
        positive("dt", self.dt)?;
        positive("max_time", self.max_time)?;
        positive("stall_time", self.stall_time)?;
        self.intersection
            .validate()
            .map_err(|e| invalid("intersection", e.to_string()))?;
        positive("controller.k_p", self.controller.k_p)?;
        positive("controller.k_v", self.controller.k_v)?;
        positive("controller.v_p", self.controller.v_p)?;
        positive("controller.d_f", self.controller.d_f)?;
        let l = &self.limits;
        if !(l.u_min < 0.0 && l.u_max > 0.0) {
            return Err(invalid("limits", "need u_min < 0 < u_max"));
        }
        if !(l.v_min >= 0.0 && l.v_max > l.v_min) {
            return Err(invalid("limits", "need 0 <= v_min < v_max"));
        }
        if self.controller.v_p > l.v_max {
            return Err(invalid("controller.v_p", "must not exceed limits.v_max"));
        }
        if self.rcs.group_size == 0 {
            return Err(invalid("rcs.group_size", "must be at least 1"));
        }
        positive("rcs.step_time", self.rcs.step_time)?;
        positive("rcs.lane_change_time", self.rcs.lane_change_time)?;
        if self.rcs.lane_change_time > self.rcs.step_time {
            return Err(invalid("rcs.lane_change_time", "must fit inside one step"));
        }
        if self.rcs.group_timeout.is_nan() || self.rcs.group_timeout < 0.0 {
            return Err(invalid("rcs.group_timeout", "must be non-negative"));
        }
        positive("signal.green", self.signal.green)?;
        if self.signal.clearance.is_nan() || self.signal.clearance < 0.0 {
            return Err(invalid("signal.clearance", "must be non-negative"));
        }
        positive("safety.min_gap", self.safety.min_gap)?;
        positive("safety.comfort_decel", self.safety.comfort_decel)?;
        positive("safety.vehicle_length", self.safety.vehicle_length)?;
        if self.safety.comfort_decel > -l.u_min {
            return Err(invalid("safety.comfort_decel", "must not exceed -limits.u_min"));
        }
        if self.safety.min_gap <= self.collision_gap() {
            return Err(invalid("safety.min_gap", "must exceed half the car-following distance"));
        }
        Ok(())
    }

    pub fn reachability(&self) -> ReachabilityParams {
        ReachabilityParams {
            cfz_length: self.intersection.cfz_length,
            v_p: self.controller.v_p,
            v_max: self.limits.v_max,
            u_max: self.limits.u_max,
        }
    }

    /// Same-lane front-to-front distance the collision monitor rejects.
    pub fn collision_gap(&self) -> f64 {
        self.controller.d_f / 2.0
    }

    /// Whole steps in `seconds`.
    pub fn steps(&self, seconds: f64) -> u64 {
        (seconds / self.dt).round().max(0.0) as u64
    }
}

//! Deterministic fixed-step simulation of the control zone and junction.
//!
//! Positions are distances travelled from the control zone entry. A vehicle
//! is in the lane-changing zone up to `lcz_length`, in the car-following zone
//! up to the stop line at `ctrl_length()`, and in the junction until its
//! tail has left its path.

mod arrivals;
mod config;
mod eventlog;
mod metrics;
mod signal;
mod world;


pub use arrivals::{generate_arrivals, sample_arrivals, Arrival, ArrivalProcess};
pub use config::{
    ConfigError, LaneChangeMode, Pipeline, RcsParams, SafetyParams, SchedulerKind, SignalParams, SimConfig,
};
pub use eventlog::{LogRecord, Zone, LOG_HEADER};
pub use metrics::{metrics, CrossingRecord, Metrics, MetricsError, MetricsReport, RunStatus};
pub use signal::{Phase, SignalPlan};
pub use world::{run_constant_spat, simulate, CollisionKind, RunResult, SimError, VehicleSummary, World};

//! Cooperative lane changing and arrival scheduling for connected automated
//! vehicles at an unsignalized four-leg intersection.
//!
//! Stage one aligns each small group of vehicles into movement-compatible
//! lanes inside the lane-changing zone ([`assignment`], [`pathplan`]). Stage
//! two orders arrivals at the stop line with a clique cover of the
//! coexistence graph ([`conflictgraph`], [`scheduler`]) and regulates the
//! resulting virtual platoon ([`control`]). [`sim`] ties both stages into a
//! fixed-step simulator with a fixed-time signal baseline.

pub mod assignment;
pub mod conflictgraph;
pub mod control;
pub mod geometry;
pub mod pathplan;
pub mod scheduler;
pub mod sim;

pub use geometry::{
    ConflictKind, IntersectionSpec, LaneRef, Leg, Movement, RcsGrid, RcsPoint, Turn, VehicleState,
};
pub use sim::{simulate, MetricsReport, Pipeline, RunStatus, SimConfig, SimError};

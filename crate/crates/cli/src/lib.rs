//! Experiment plans and the comparison table behind `junction compare`.

pub mod compare;
pub mod plan;

pub use compare::{compare, CellStats, Comparison, Reduction, RunOutcome};
pub use plan::{Axis, ExperimentPlan, PlanError};

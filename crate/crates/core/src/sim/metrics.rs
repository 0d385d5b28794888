//! Evacuation time and average travel-time delay.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::Pipeline;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no vehicles recorded")]
    Empty,
    #[error("vehicle {0} never reached the stop line")]
    Incomplete(u32),
}

/// Entry and stop-line crossing of one vehicle, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub id: u32,
    pub t_in: f64,
    pub t_out: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Time at which the last vehicle reaches the stop line, s.
    pub t_evc: f64,
    /// Mean delay against a free-flow traversal at top speed, s.
    pub t_attd: f64,
}

/// Metrics over a complete set of crossings.
pub fn metrics(records: &[CrossingRecord], ctrl_length: f64, v_max: f64) -> Result<Metrics, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let free_flow = ctrl_length / v_max;
    let mut t_evc = f64::NEG_INFINITY;
    let mut delay = 0.0;
    for r in records {
        let out = r.t_out.ok_or(MetricsError::Incomplete(r.id))?;
        t_evc = t_evc.max(out);
        delay += out - r.t_in - free_flow;
    }
    Ok(Metrics {
        t_evc,
        t_attd: delay / records.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Deadlock,
    Timeout,
}

/// Machine-readable summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub vehicles: usize,
    /// Demand per approach, veh/h.
    pub volume: f64,
    pub status: RunStatus,
    /// Vehicles that reached the stop line.
    pub crossed: usize,
    pub t_evc: Option<f64>,
    pub t_attd: Option<f64>,
    pub collisions: usize,
    /// Simulated time at the end of the run, s.
    pub sim_time: f64,
    /// Lane-change groups planned and lane changes executed.
    pub groups_planned: usize,
    pub lane_changes: usize,
    /// Scheduling events in the car-following zone.
    pub schedules: usize,
    /// Largest clique cover size seen in a scheduling event.
    pub max_cover: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

//! Longitudinal feedback control: slot tracking while changing lanes and
//! predecessor-leader following inside the virtual platoon.
//!
//! Platoon positions are signed distances to the stop line, so a vehicle
//! ahead has the smaller value. The virtual leader is node 0 at depth 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scheduler::SpanningTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    pub k_p: f64,
    pub k_v: f64,
    /// Platoon cruising speed, m/s.
    pub v_p: f64,
    /// Steady car-following distance between consecutive layers, m.
    pub d_f: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_p: 0.1,
            k_v: 0.3,
            v_p: 10.0,
            d_f: 30.0,
        }
    }
}

impl ControllerGains {
    /// Time between consecutive layers at the stop line.
    pub fn headway(&self) -> f64 {
        self.d_f / self.v_p
    }
}

/// Actuator and speed bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            u_min: -6.0,
            u_max: 5.0,
            v_min: 0.0,
            v_max: 15.0,
        }
    }
}

impl Limits {
    pub fn saturate(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }
}

/// Slot tracking in the lane-changing zone. `position` and `slot` are
/// abscissae along the direction of travel.
pub fn stage1_accel(position: f64, velocity: f64, slot: f64, gains: &ControllerGains, limits: &Limits) -> f64 {
    let dp = position - slot;
    let dv = velocity - gains.v_p;
    limits.saturate(-gains.k_p * dp - gains.k_v * dv)
}

/// A platoon member as seen by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlatoonMember {
    /// Distance to the stop line, m (negative once past it).
    pub p: f64,
    pub v: f64,
    pub depth: u32,
}

/// Unsaturated contribution of one information source `j` to vehicle `i`.
pub fn stage2_term(i: &PlatoonMember, j: &PlatoonMember, gains: &ControllerGains) -> f64 {
    let dp = j.p - i.p - gains.d_f * (f64::from(j.depth) - f64::from(i.depth));
    let dv = i.v - j.v;
    -(gains.k_p * dp + gains.k_v * dv)
}

/// Platoon control: sum of per-source terms, saturated. With no sources the
/// vehicle only holds the platoon speed.
pub fn stage2_accel(i: &PlatoonMember, sources: &[PlatoonMember], gains: &ControllerGains, limits: &Limits) -> f64 {
    let u = if sources.is_empty() {
        -gains.k_v * (i.v - gains.v_p)
    } else {
        sources.iter().map(|j| stage2_term(i, j, gains)).sum()
    };
    limits.saturate(u)
}

/// Information sources per vehicle: the leader 0 and, below depth 1, the
/// tree parent. Sources are listed in ascending id order.
pub fn plf_topology(tree: &SpanningTree) -> BTreeMap<u32, Vec<u32>> {
    tree.parent_list()
        .into_iter()
        .map(|(v, parent, _)| {
            let sources = if parent == 0 { vec![0] } else { vec![0, parent] };
            (v, sources)
        })
        .collect()
}

/// Spacing error against the leader reference and speed error.
pub fn platoon_errors(i: &PlatoonMember, leader: &PlatoonMember, gains: &ControllerGains) -> (f64, f64) {
    let spacing = i.p - leader.p - gains.d_f * (f64::from(i.depth) - f64::from(leader.depth));
    (spacing, i.v - gains.v_p)
}

/// Forward Euler step in the direction of travel; the speed is clamped to
/// its bounds. Returns the distance covered and the new speed.
pub fn euler_step(v: f64, u: f64, dt: f64, limits: &Limits) -> (f64, f64) {
    let dx = v * dt;
    let nv = (v + u * dt).clamp(limits.v_min, limits.v_max);
    (dx, nv)
}

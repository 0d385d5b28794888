//! Fixed-time dual-ring signal plan.

use serde::Serialize;

use crate::geometry::{Leg, Movement, Turn};

use super::config::SignalParams;

/// Four phases in cycle order: E/W left, E/W straight and right, N/S left,
/// N/S straight and right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Phase {
    EastWestLeft,
    EastWestThrough,
    NorthSouthLeft,
    NorthSouthThrough,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::EastWestLeft,
        Phase::EastWestThrough,
        Phase::NorthSouthLeft,
        Phase::NorthSouthThrough,
    ];

    pub fn of(m: Movement) -> Phase {
        let ew = matches!(m.leg, Leg::East | Leg::West);
        match (ew, m.turn) {
            (true, Turn::Left) => Phase::EastWestLeft,
            (true, _) => Phase::EastWestThrough,
            (false, Turn::Left) => Phase::NorthSouthLeft,
            (false, _) => Phase::NorthSouthThrough,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPlan {
    pub green: f64,
    pub clearance: f64,
}

impl From<SignalParams> for SignalPlan {
    fn from(p: SignalParams) -> Self {
        Self {
            green: p.green,
            clearance: p.clearance,
        }
    }
}

impl Default for SignalPlan {
    fn default() -> Self {
        SignalParams::default().into()
    }
}

impl SignalPlan {
    pub fn cycle(&self) -> f64 {
        4.0 * (self.green + self.clearance)
    }

    /// Phase showing green at time `t`, or `None` during clearance.
    pub fn green_phase(&self, t: f64) -> Option<Phase> {
        let period = self.green + self.clearance;
        let c = t.rem_euclid(self.cycle());
        let k = ((c / period).floor() as usize).min(3);
        (c - k as f64 * period < self.green).then_some(Phase::ALL[k])
    }

    pub fn is_green(&self, m: Movement, t: f64) -> bool {
        self.green_phase(t) == Some(Phase::of(m))
    }

    /// Time from `t` until the movement next shows green (zero if it is green).
    pub fn wait_for_green(&self, m: Movement, t: f64) -> f64 {
        if self.is_green(m, t) {
            return 0.0;
        }
        let period = self.green + self.clearance;
        let start = Phase::of(m).index() as f64 * period;
        (start - t).rem_euclid(self.cycle())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::IntersectionSpec;

    #[test]
    fn cycle_layout() {
        let s = SignalPlan::default();
        assert_eq!(s.cycle(), 160.0);
        assert_eq!(s.green_phase(0.0), Some(Phase::EastWestLeft));
        assert_eq!(s.green_phase(34.9), Some(Phase::EastWestLeft));
        assert_eq!(s.green_phase(36.0), None);
        assert_eq!(s.green_phase(40.0), Some(Phase::EastWestThrough));
        assert_eq!(s.green_phase(100.0), Some(Phase::NorthSouthLeft));
        assert_eq!(s.green_phase(150.0), Some(Phase::NorthSouthThrough));
        assert_eq!(s.green_phase(155.0), None);
        assert_eq!(s.green_phase(159.0), None);
        assert_eq!(s.green_phase(160.0), Some(Phase::EastWestLeft));
    }

    #[test]
    fn green_movements_never_conflict() {
        let spec = IntersectionSpec::default();
        let s = SignalPlan::default();
        let all = Movement::all();
        for k in 0..1600 {
            let t = k as f64 * 0.1;
            let green: Vec<Movement> = all.iter().copied().filter(|&m| s.is_green(m, t)).collect();
            for a in &green {
                for b in &green {
                    if a.leg != b.leg {
                        assert_eq!(spec.movement_conflict(*a, *b, false), None, "{a} {b} at {t}");
                    }
                }
            }
        }
    }

    #[test]
    fn missed_phase_waits_at_most_one_cycle() {
        let s = SignalPlan::default();
        let m = Movement::new(Leg::North, Turn::Left);
        // Phase ends at 115 s; arriving just after waits for the next cycle.
        let w = s.wait_for_green(m, 115.05);
        assert!((w - (240.0 - 115.05)).abs() < 1e-9, "{w}");
        for m in Movement::all() {
            for k in 0..3200 {
                let t = k as f64 * 0.05;
                let w = s.wait_for_green(m, t);
                assert!((0.0..=s.cycle()).contains(&w));
                assert!(s.is_green(m, t + w + 1e-6), "{m} at {t} + {w}");
            }
        }
    }
}

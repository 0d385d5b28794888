//! Seeded inputs shared by the benchmarks.

use junction_core::assignment::{CostMatrix, Target};
use junction_core::conflictgraph::Cug;
use junction_core::geometry::IntersectionSpec;
use junction_core::pathplan::PlanInstance;
use junction_core::{Leg, Movement, RcsGrid, RcsPoint, Turn, VehicleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Square matrix of integer-valued costs in `0..50`.
pub fn cost_matrix(n: usize, seed: u64) -> CostMatrix {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| f64::from(r.random_range(0..50u32))).collect())
        .collect();
    CostMatrix::from_rows(&rows).expect("square matrix")
}

/// Random coexistence graph on `n` nodes.
pub fn cug(n: usize, density: f64, seed: u64) -> Cug {
    let mut r = rng(seed);
    let mut g = Cug::empty(n);
    for a in 1..=n as u32 {
        for b in a + 1..=n as u32 {
            if r.random_bool(density) {
                g.add_edge(a, b).expect("labels in range");
            }
        }
    }
    g
}

/// A full three-vehicle lane-change group on the 3 x 9 formation grid, every
/// vehicle starting in the wrong lane.
pub fn lane_change_group() -> PlanInstance {
    let m = |t| Movement::new(Leg::South, t);
    let (l, s, r) = (m(Turn::Left), m(Turn::Straight), m(Turn::Right));
    PlanInstance::new(
        RcsGrid::cells(3, 9),
        vec![RcsPoint::new(8, 0), RcsPoint::new(5, 1), RcsPoint::new(2, 2)],
        vec![r, l, s],
        vec![
            Target { cell: RcsPoint::new(8, 0), movement: l },
            Target { cell: RcsPoint::new(5, 1), movement: s },
            Target { cell: RcsPoint::new(2, 2), movement: r },
        ],
    )
    .expect("cells inside the grid")
}

/// `n` vehicles spread over the car-following zone in entry order.
pub fn cfz_vehicles(spec: &IntersectionSpec, n: usize, seed: u64) -> Vec<VehicleState> {
    let mut r = rng(seed);
    let mut out: Vec<VehicleState> = (0..n)
        .map(|k| {
            let m = Movement::new(Leg::ALL[r.random_range(0..4)], Turn::ALL[r.random_range(0..3)]);
            let mut v = VehicleState::new(k as u32 + 1, spec.lane_for(m), m);
            v.position = spec.ctrl_length() - 10.0 - 40.0 * (n - k) as f64 * r.random_range(0.5..1.0);
            v.velocity = 10.0;
            v
        })
        .collect();
    out.sort_by(|a, b| b.position.total_cmp(&a.position));
    for (k, v) in out.iter_mut().enumerate() {
        v.id = k as u32 + 1;
    }
    out
}

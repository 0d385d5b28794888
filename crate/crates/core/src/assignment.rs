//! Vehicle-to-target assignment: cost and preference matrices, a Hungarian
//! solver, and Murty's ranking of assignments in non-decreasing cost order.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{Movement, RcsPoint};

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("expected {expected} entries, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("assignment problem is empty")]
    Empty,
    #[error("cost matrix entry ({row}, {col}) is not a finite non-negative number")]
    BadCost { row: usize, col: usize },
    #[error("vehicle {vehicle} has no target on a lane serving its movement")]
    NoCompatibleTarget { vehicle: usize },
}

/// Square matrix of non-negative assignment costs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, AssignmentError> {
        if n == 0 {
            return Err(AssignmentError::Empty);
        }
        if data.len() != n * n {
            return Err(AssignmentError::SizeMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(AssignmentError::BadCost { row: k / n, col: k % n });
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(AssignmentError::SizeMismatch { expected: n, got: r.len() });
        }
        Self::new(n, rows.iter().flatten().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Cost of a permutation, summed in row order.
    pub fn cost_of(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }
}

/// Euclidean distance from every start cell to every target cell.
pub fn build_cost_matrix(starts: &[RcsPoint], targets: &[RcsPoint]) -> Result<CostMatrix, AssignmentError> {
    if starts.len() != targets.len() {
        return Err(AssignmentError::SizeMismatch {
            expected: starts.len(),
            got: targets.len(),
        });
    }
    let n = starts.len();
    let data = starts
        .iter()
        .flat_map(|s| targets.iter().map(move |t| s.euclidean(*t)))
        .collect();
    CostMatrix::new(n, data)
}

/// A target cell and the movement its lane serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    pub cell: RcsPoint,
    pub movement: Movement,
}

/// Entries are 1 where the target lane serves the vehicle's movement and the
/// penalty `M` otherwise. `M` depends on the cost matrix it multiplies, so it
/// is supplied when the effective costs are formed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceMatrix {
    n: usize,
    allowed: Vec<bool>,
}

impl PreferenceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.n + j]
    }

    /// `l_ij` for a given penalty.
    pub fn value(&self, i: usize, j: usize, penalty: f64) -> f64 {
        if self.allowed(i, j) {
            1.0
        } else {
            penalty
        }
    }
}

pub fn build_preference_matrix(
    vehicles: &[Movement],
    targets: &[Target],
) -> Result<PreferenceMatrix, AssignmentError> {
    if vehicles.len() != targets.len() {
        return Err(AssignmentError::SizeMismatch {
            expected: vehicles.len(),
            got: targets.len(),
        });
    }
    let n = vehicles.len();
    if n == 0 {
        return Err(AssignmentError::Empty);
    }
    let allowed: Vec<bool> = vehicles
        .iter()
        .flat_map(|v| targets.iter().map(move |t| t.movement == *v))
        .collect();
    for i in 0..n {
        if !allowed[i * n..(i + 1) * n].iter().any(|&a| a) {
            return Err(AssignmentError::NoCompatibleTarget { vehicle: i });
        }
    }
    Ok(PreferenceMatrix { n, allowed })
}

/// Penalty large enough that no finite-cost perfect matching can lose to one
/// using a forbidden pair.
pub fn penalty_for(cost: &CostMatrix) -> f64 {
    1e6 * (cost.max() + 1.0)
}

/// Element-wise product `c_ij * l_ij`. A forbidden pair at zero distance
/// would vanish under the plain product, so its distance is floored at one.
pub fn effective_costs(cost: &CostMatrix, pref: &PreferenceMatrix) -> Result<CostMatrix, AssignmentError> {
    if cost.n() != pref.n() {
        return Err(AssignmentError::SizeMismatch {
            expected: cost.n(),
            got: pref.n(),
        });
    }
    let m = penalty_for(cost);
    let n = cost.n();
    let data = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if pref.allowed(i, j) {
                cost.get(i, j)
            } else {
                cost.get(i, j).max(1.0) * m
            }
        })
        .collect();
    CostMatrix::new(n, data)
}

/// A perfect matching of vehicles (rows) to targets (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    /// `perm[i]` is the target of vehicle `i`.
    pub perm: Vec<usize>,
    pub cost: f64,
}

impl Assignment {
    /// 0-1 matrix form.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let n = self.perm.len();
        self.perm
            .iter()
            .map(|&j| (0..n).map(|c| u8::from(c == j)).collect())
            .collect()
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.perm.len()];
        self.perm.iter().all(|&j| j < seen.len() && !std::mem::replace(&mut seen[j], true))
    }
}

/// Hungarian algorithm with row/column potentials. `None` entries are
/// forbidden. Returns `None` when no perfect matching avoids them.
fn hungarian(n: usize, cost: &dyn Fn(usize, usize) -> Option<f64>) -> Option<Vec<usize>> {
    const INF: f64 = f64::INFINITY;
    // 1-based, column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                if let Some(c) = cost(i0 - 1, j - 1) {
                    let cur = c - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if !delta.is_finite() {
                return None;
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    Some(perm)
}

/// Row constraints of one Murty subproblem.
#[derive(Debug, Clone)]
struct Restriction {
    forced: Vec<Option<usize>>,
    forbidden: Vec<bool>,
}

impl Restriction {
    fn open(n: usize) -> Self {
        Self {
            forced: vec![None; n],
            forbidden: vec![false; n * n],
        }
    }

    fn permits(&self, n: usize, i: usize, j: usize) -> bool {
        if self.forbidden[i * n + j] {
            return false;
        }
        match self.forced[i] {
            Some(c) => c == j,
            None => !self.forced.contains(&Some(j)),
        }
    }
}

fn tolerance(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// Minimum-cost matching under a restriction; among optimal matchings the
/// lexicographically smallest permutation is returned.
fn solve_restricted(cost: &CostMatrix, r: &Restriction) -> Option<Assignment> {
    let n = cost.n();
    let solve = |r: &Restriction| {
        hungarian(n, &|i, j| r.permits(n, i, j).then(|| cost.get(i, j))).map(|p| {
            let c = cost.cost_of(&p);
            (p, c)
        })
    };
    let (_, optimum) = solve(r)?;
    let mut fixed = r.clone();
    for row in 0..n {
        if fixed.forced[row].is_some() {
            continue;
        }
        let mut settled = false;
        for col in 0..n {
            if !fixed.permits(n, row, col) {
                continue;
            }
            fixed.forced[row] = Some(col);
            if let Some((_, c)) = solve(&fixed) {
                if c <= optimum + tolerance(optimum) {
                    settled = true;
                    break;
                }
            }
            fixed.forced[row] = None;
        }
        debug_assert!(settled, "an optimal completion always exists");
        if !settled {
            return None;
        }
    }
    let perm: Vec<usize> = fixed.forced.iter().map(|f| f.expect("all rows fixed")).collect();
    let cost = cost.cost_of(&perm);
    Some(Assignment { perm, cost })
}

/// Minimum-cost perfect matching of an effective cost matrix.
pub fn solve_assignment(cost: &CostMatrix) -> Assignment {
    solve_restricted(cost, &Restriction::open(cost.n())).expect("unrestricted square problem is always feasible")
}

fn cost_key(c: f64) -> i128 {
    (c * 1e9).round() as i128
}

struct Node {
    key: i128,
    assignment: Assignment,
    restriction: Restriction,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .cmp(&other.key)
            .then_with(|| self.assignment.perm.cmp(&other.assignment.perm))
    }
}

/// Assignments in non-decreasing cost order (ties in lexicographic order of
/// the permutation), produced by Murty's partitioning. The stream ends after
/// all `n!` permutations.
pub struct KBestAssignments {
    cost: CostMatrix,
    heap: BinaryHeap<Reverse<Node>>,
}

impl KBestAssignments {
    pub fn new(cost: CostMatrix) -> Self {
        let mut heap = BinaryHeap::new();
        let restriction = Restriction::open(cost.n());
        if let Some(a) = solve_restricted(&cost, &restriction) {
            heap.push(Reverse(Node {
                key: cost_key(a.cost),
                assignment: a,
                restriction,
            }));
        }
        Self { cost, heap }
    }
}

impl Iterator for KBestAssignments {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        let Reverse(node) = self.heap.pop()?;
        let n = self.cost.n();
        let perm = &node.assignment.perm;
        let mut base = node.restriction.clone();
        for row in 0..n {
            if node.restriction.forced[row].is_some() {
                continue;
            }
            let mut child = base.clone();
            child.forbidden[row * n + perm[row]] = true;
            if let Some(a) = solve_restricted(&self.cost, &child) {
                self.heap.push(Reverse(Node {
                    key: cost_key(a.cost),
                    assignment: a,
                    restriction: child,
                }));
            }
            base.forced[row] = Some(perm[row]);
        }
        Some(node.assignment)
    }
}

/// The first `k_max` assignments in non-decreasing cost order.
pub fn kth_best_assignments(cost: &CostMatrix, k_max: usize) -> std::iter::Take<KBestAssignments> {
    KBestAssignments::new(cost.clone()).take(k_max)
}

/// Cost, preference and effective matrices of one vehicle group.
#[derive(Debug, Clone)]
pub struct AssignmentProblem {
    pub cost: CostMatrix,
    pub preference: PreferenceMatrix,
    pub penalty: f64,
    pub effective: CostMatrix,
}

impl AssignmentProblem {
    pub fn new(
        starts: &[RcsPoint],
        movements: &[Movement],
        targets: &[Target],
    ) -> Result<Self, AssignmentError> {
        let target_cells: Vec<RcsPoint> = targets.iter().map(|t| t.cell).collect();
        let cost = build_cost_matrix(starts, &target_cells)?;
        let preference = build_preference_matrix(movements, targets)?;
        let effective = effective_costs(&cost, &preference)?;
        let penalty = penalty_for(&cost);
        Ok(Self {
            cost,
            preference,
            penalty,
            effective,
        })
    }

    /// Whether an assignment avoids every penalised pair.
    pub fn respects_preferences(&self, a: &Assignment) -> bool {
        a.perm.iter().enumerate().all(|(i, &j)| self.preference.allowed(i, j))
    }

    pub fn ranked(&self) -> KBestAssignments {
        KBestAssignments::new(self.effective.clone())
    }
}

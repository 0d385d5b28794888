//! Lane-change planning on the relative coordinate grid: space-time A*,
//! pairwise conflict detection, conflict-based search per assignment, and
//! the loop over ranked assignments that returns the cheapest path set.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::assignment::{Assignment, AssignmentError, AssignmentProblem, Target};
use crate::geometry::{Movement, RcsGrid, RcsPoint};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("cell {0} lies outside the grid")]
    OutOfGrid(RcsPoint),
    #[error("no conflict-free paths within {horizon} steps")]
    Infeasible { horizon: usize },
    #[error("search exceeded its budget of {0} constraint-tree nodes")]
    BudgetExceeded(usize),
    #[error("{starts} starts, {targets} targets, {movements} movements")]
    SizeMismatch {
        starts: usize,
        targets: usize,
        movements: usize,
    },
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// Cells occupied by one vehicle at `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RcsPath {
    pub vehicle: usize,
    pub cells: Vec<RcsPoint>,
}

impl RcsPath {
    pub fn horizon(&self) -> usize {
        self.cells.len().saturating_sub(1)
    }

    pub fn at(&self, t: usize) -> RcsPoint {
        self.cells[t.min(self.cells.len() - 1)]
    }

    /// Non-stay steps.
    pub fn moves(&self) -> u32 {
        self.cells.windows(2).filter(|w| w[0] != w[1]).count() as u32
    }

    /// Steps that change lane.
    pub fn lateral_moves(&self) -> u32 {
        self.cells.windows(2).filter(|w| w[0].y != w[1].y).count() as u32
    }

    /// Every step is a stay or a unit orthogonal move.
    pub fn is_legal(&self) -> bool {
        self.cells.windows(2).all(|w| w[0].manhattan(w[1]) <= 1)
    }
}

/// Forbidden vertices `(cell, t)` and transitions `(from, to, t)`, where a
/// transition at `t` moves from `from` at `t - 1` to `to` at `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    vertices: HashSet<(RcsPoint, usize)>,
    edges: HashSet<(RcsPoint, RcsPoint, usize)>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forbid_vertex(&mut self, cell: RcsPoint, t: usize) {
        self.vertices.insert((cell, t));
    }

    pub fn forbid_edge(&mut self, from: RcsPoint, to: RcsPoint, t: usize) {
        self.edges.insert((from, to, t));
    }

    pub fn allows(&self, from: RcsPoint, to: RcsPoint, t: usize) -> bool {
        !self.vertices.contains(&(to, t)) && !self.edges.contains(&(from, to, t))
    }

    pub fn allows_start(&self, cell: RcsPoint) -> bool {
        !self.vertices.contains(&(cell, 0))
    }

    pub fn len(&self) -> usize {
        self.vertices.len() + self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Lexicographic path cost: moves first, lane changes second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct PathCost {
    pub moves: u32,
    pub lateral: u32,
}

impl std::ops::Add for PathCost {
    type Output = PathCost;
    fn add(self, o: PathCost) -> PathCost {
        PathCost {
            moves: self.moves + o.moves,
            lateral: self.lateral + o.lateral,
        }
    }
}

fn path_cost(p: &RcsPath) -> PathCost {
    PathCost {
        moves: p.moves(),
        lateral: p.lateral_moves(),
    }
}

fn neighbours(grid: &RcsGrid, c: RcsPoint) -> impl Iterator<Item = RcsPoint> + '_ {
    let candidates = [
        Some(c),
        c.x.checked_add(1).map(|x| RcsPoint::new(x, c.y)),
        c.x.checked_sub(1).map(|x| RcsPoint::new(x, c.y)),
        c.y.checked_add(1).map(|y| RcsPoint::new(c.x, y)),
        c.y.checked_sub(1).map(|y| RcsPoint::new(c.x, y)),
    ];
    candidates.into_iter().flatten().filter(move |p| grid.contains(*p))
}

#[derive(PartialEq, Eq)]
struct Open {
    f: PathCost,
    h: PathCost,
    t: usize,
    cell: RcsPoint,
}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        // Smaller h first: among equal totals, prefer states that moved early.
        (self.f, self.h, Reverse(self.t), self.cell).cmp(&(o.f, o.h, Reverse(o.t), o.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Cheapest path from `start` at `t = 0` to `goal` at `t = horizon`.
pub fn astar(
    grid: &RcsGrid,
    start: RcsPoint,
    goal: RcsPoint,
    constraints: &ConstraintSet,
    horizon: usize,
) -> Result<RcsPath, PlanError> {
    for c in [start, goal] {
        if !grid.contains(c) {
            return Err(PlanError::OutOfGrid(c));
        }
    }
    let infeasible = PlanError::Infeasible { horizon };
    if !constraints.allows_start(start) || (start.manhattan(goal) as usize) > horizon {
        return Err(infeasible);
    }
    let h = |c: RcsPoint| PathCost {
        moves: c.manhattan(goal),
        lateral: c.y.abs_diff(goal.y),
    };
    let mut best: HashMap<(RcsPoint, usize), PathCost> = HashMap::new();
    let mut parent: HashMap<(RcsPoint, usize), RcsPoint> = HashMap::new();
    let mut open = BinaryHeap::new();
    best.insert((start, 0), PathCost::default());
    open.push(Reverse(Open {
        f: h(start),
        h: h(start),
        t: 0,
        cell: start,
    }));
    let mut closed: HashSet<(RcsPoint, usize)> = HashSet::new();
    while let Some(Reverse(node)) = open.pop() {
        let key = (node.cell, node.t);
        if !closed.insert(key) {
            continue;
        }
        if node.t == horizon {
            if node.cell != goal {
                continue;
            }
            let mut cells = vec![goal];
            let mut cur = key;
            while cur.1 > 0 {
                let prev = parent[&cur];
                cells.push(prev);
                cur = (prev, cur.1 - 1);
            }
            cells.reverse();
            return Ok(RcsPath { vehicle: 0, cells });
        }
        let g = best[&key];
        let t = node.t + 1;
        for next in neighbours(grid, node.cell) {
            if !constraints.allows(node.cell, next, t) || next.manhattan(goal) as usize > horizon - t {
                continue;
            }
            let step = PathCost {
                moves: u32::from(next != node.cell),
                lateral: u32::from(next.y != node.cell.y),
            };
            let ng = g + step;
            let nk = (next, t);
            if closed.contains(&nk) || best.get(&nk).is_some_and(|b| *b <= ng) {
                continue;
            }
            best.insert(nk, ng);
            parent.insert(nk, node.cell);
            open.push(Reverse(Open {
                f: ng + h(next),
                h: h(next),
                t,
                cell: next,
            }));
        }
    }
    Err(infeasible)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ConflictType {
    /// Both vehicles arrive in the same cell at the same step.
    NodeI,
    /// One vehicle moves into the cell the other keeps occupying.
    NodeII,
    /// The two vehicles exchange cells.
    Edge,
    /// A vehicle enters the cell the other is leaving at the same step.
    Intermediate,
}

impl fmt::Display for ConflictType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConflictType::NodeI => "node-I",
            ConflictType::NodeII => "node-II",
            ConflictType::Edge => "edge",
            ConflictType::Intermediate => "intermediate",
        })
    }
}

/// A conflict at step `t` between path indices `vehicles.0` and `vehicles.1`.
/// For intermediate conflicts the first vehicle is the one entering `cell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Conflict {
    pub t: usize,
    pub vehicles: (usize, usize),
    pub kind: ConflictType,
    pub cell: RcsPoint,
}

fn classify(a: &RcsPath, b: &RcsPath, t: usize) -> Option<(ConflictType, bool, RcsPoint)> {
    let (qa, qb) = (a.at(t), b.at(t));
    if t == 0 {
        return (qa == qb).then_some((ConflictType::NodeI, false, qa));
    }
    let (pa, pb) = (a.at(t - 1), b.at(t - 1));
    let (ma, mb) = (pa != qa, pb != qb);
    if qa == qb {
        let kind = if ma != mb { ConflictType::NodeII } else { ConflictType::NodeI };
        return Some((kind, false, qa));
    }
    if ma && qa == pb && qb == pa {
        return Some((ConflictType::Edge, false, qa));
    }
    if ma && mb && qa == pb {
        return Some((ConflictType::Intermediate, false, qa));
    }
    if ma && mb && qb == pa {
        return Some((ConflictType::Intermediate, true, qb));
    }
    None
}

/// Every pairwise conflict, sorted by step then vehicle pair.
pub fn detect_conflicts(paths: &[RcsPath]) -> Vec<Conflict> {
    let horizon = paths.iter().map(RcsPath::horizon).max().unwrap_or(0);
    let mut out = Vec::new();
    for t in 0..=horizon {
        for i in 0..paths.len() {
            for j in i + 1..paths.len() {
                if let Some((kind, swapped, cell)) = classify(&paths[i], &paths[j], t) {
                    let vehicles = if swapped { (j, i) } else { (i, j) };
                    out.push(Conflict { t, vehicles, kind, cell });
                }
            }
        }
    }
    out
}

fn first_conflict(paths: &[RcsPath]) -> Option<Conflict> {
    let horizon = paths.iter().map(RcsPath::horizon).max().unwrap_or(0);
    for t in 0..=horizon {
        for i in 0..paths.len() {
            for j in i + 1..paths.len() {
                if let Some((kind, swapped, cell)) = classify(&paths[i], &paths[j], t) {
                    let vehicles = if swapped { (j, i) } else { (i, j) };
                    return Some(Conflict { t, vehicles, kind, cell });
                }
            }
        }
    }
    None
}

/// Constraint that removes the conflict from one side's perspective.
fn resolve_for(paths: &[RcsPath], c: &Conflict, first: bool) -> (usize, ConstraintSet) {
    let (i, j) = c.vehicles;
    let v = if first { i } else { j };
    let mut k = ConstraintSet::new();
    match c.kind {
        ConflictType::NodeI | ConflictType::NodeII => k.forbid_vertex(c.cell, c.t),
        ConflictType::Edge => k.forbid_edge(paths[v].at(c.t - 1), paths[v].at(c.t), c.t),
        ConflictType::Intermediate => {
            if first {
                k.forbid_vertex(c.cell, c.t);
            } else {
                k.forbid_vertex(c.cell, c.t - 1);
            }
        }
    }
    (v, k)
}

fn merge(into: &mut ConstraintSet, from: &ConstraintSet) {
    into.vertices.extend(from.vertices.iter().copied());
    into.edges.extend(from.edges.iter().copied());
}

/// Conflict-free paths with their total cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSet {
    pub paths: Vec<RcsPath>,
    pub cost: PathCost,
}

impl PathSet {
    fn new(paths: Vec<RcsPath>) -> Self {
        let cost = paths.iter().map(path_cost).fold(PathCost::default(), |a, b| a + b);
        Self { paths, cost }
    }

    /// Total distance travelled, in cells.
    pub fn moves(&self) -> u32 {
        self.cost.moves
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CbsMode {
    /// Constraint tree that branches on both vehicles of a conflict; optimal.
    #[default]
    BranchBoth,
    /// Constrain only the later vehicle of each conflict (falling back to the
    /// earlier one when that is infeasible). Fast but may lose optimality.
    SingleSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CbsConfig {
    pub mode: CbsMode,
    /// Maximum constraint-tree nodes expanded per search.
    pub node_budget: usize,
}

impl Default for CbsConfig {
    fn default() -> Self {
        Self {
            mode: CbsMode::BranchBoth,
            node_budget: 50_000,
        }
    }
}

struct CtNode {
    cost: PathCost,
    seq: u64,
    constraints: Vec<ConstraintSet>,
    paths: Vec<RcsPath>,
}

impl PartialEq for CtNode {
    fn eq(&self, o: &Self) -> bool {
        (self.cost, self.seq) == (o.cost, o.seq)
    }
}

impl Eq for CtNode {}

impl Ord for CtNode {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.cost, self.seq).cmp(&(o.cost, o.seq))
    }
}

impl PartialOrd for CtNode {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn plan_one(
    grid: &RcsGrid,
    starts: &[RcsPoint],
    goals: &[RcsPoint],
    k: &[ConstraintSet],
    v: usize,
    horizon: usize,
) -> Result<RcsPath, PlanError> {
    let mut p = astar(grid, starts[v], goals[v], &k[v], horizon)?;
    p.vehicle = v;
    Ok(p)
}

/// Conflict-free paths taking vehicle `i` from `starts[i]` to `goals[i]`.
pub fn cbs_paths(
    grid: &RcsGrid,
    starts: &[RcsPoint],
    goals: &[RcsPoint],
    horizon: usize,
    cfg: &CbsConfig,
) -> Result<PathSet, PlanError> {
    let n = starts.len();
    let infeasible = PlanError::Infeasible { horizon };
    let constraints = vec![ConstraintSet::new(); n];
    let paths = (0..n)
        .map(|v| plan_one(grid, starts, goals, &constraints, v, horizon))
        .collect::<Result<Vec<_>, _>>()?;
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    open.push(Reverse(CtNode {
        cost: PathSet::new(paths.clone()).cost,
        seq,
        constraints,
        paths,
    }));
    let mut expanded = 0usize;
    while let Some(Reverse(node)) = open.pop() {
        let Some(conflict) = first_conflict(&node.paths) else {
            return Ok(PathSet::new(node.paths));
        };
        expanded += 1;
        if expanded > cfg.node_budget {
            return Err(PlanError::BudgetExceeded(cfg.node_budget));
        }
        let sides: &[bool] = match cfg.mode {
            CbsMode::BranchBoth => &[true, false],
            CbsMode::SingleSided => &[false, true],
        };
        for &first in sides {
            let (v, extra) = resolve_for(&node.paths, &conflict, first);
            let mut constraints = node.constraints.clone();
            merge(&mut constraints[v], &extra);
            let Ok(p) = plan_one(grid, starts, goals, &constraints, v, horizon) else {
                continue;
            };
            let mut paths = node.paths.clone();
            paths[v] = p;
            seq += 1;
            open.push(Reverse(CtNode {
                cost: PathSet::new(paths.clone()).cost,
                seq,
                constraints,
                paths,
            }));
            if cfg.mode == CbsMode::SingleSided {
                break;
            }
        }
    }
    Err(infeasible)
}

/// One group's lane-change planning problem.
#[derive(Debug, Clone)]
pub struct PlanInstance {
    pub grid: RcsGrid,
    pub starts: Vec<RcsPoint>,
    pub movements: Vec<Movement>,
    pub targets: Vec<Target>,
    pub horizon: usize,
}

impl PlanInstance {
    /// Instance with the default horizon: grid diameter plus group size.
    pub fn new(
        grid: RcsGrid,
        starts: Vec<RcsPoint>,
        movements: Vec<Movement>,
        targets: Vec<Target>,
    ) -> Result<Self, PlanError> {
        let horizon = grid.diameter() as usize + starts.len();
        Self::with_horizon(grid, starts, movements, targets, horizon)
    }

    pub fn with_horizon(
        grid: RcsGrid,
        starts: Vec<RcsPoint>,
        movements: Vec<Movement>,
        targets: Vec<Target>,
        horizon: usize,
    ) -> Result<Self, PlanError> {
        if starts.len() != targets.len() || starts.len() != movements.len() {
            return Err(PlanError::SizeMismatch {
                starts: starts.len(),
                targets: targets.len(),
                movements: movements.len(),
            });
        }
        if let Some(c) = starts.iter().chain(targets.iter().map(|t| &t.cell)).find(|c| !grid.contains(**c)) {
            return Err(PlanError::OutOfGrid(*c));
        }
        Ok(Self {
            grid,
            starts,
            movements,
            targets,
            horizon,
        })
    }

    pub fn goals(&self, a: &Assignment) -> Vec<RcsPoint> {
        a.perm.iter().map(|&j| self.targets[j].cell).collect()
    }
}

/// Paths realising one assignment.
pub fn cbs(inst: &PlanInstance, a: &Assignment, cfg: &CbsConfig) -> Result<PathSet, PlanError> {
    cbs_paths(&inst.grid, &inst.starts, &inst.goals(a), inst.horizon, cfg)
}

/// One iteration of the ranked-assignment loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: usize,
    /// Assignment cost `C_k`.
    pub assignment_cost: f64,
    /// Path-set cost `C'_k`, absent when no path set was found.
    pub path_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    pub assignment: Assignment,
    pub paths: PathSet,
    /// Path-set cost on the same scale as assignment costs.
    pub cost: f64,
    pub trace: Vec<TraceRow>,
}

/// Path-set cost weighted by the preference penalty, so that it bounds the
/// assignment cost from above even for penalised pairs.
fn weighted_cost(problem: &AssignmentProblem, a: &Assignment, ps: &PathSet) -> f64 {
    a.perm
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let m = f64::from(ps.paths[i].moves());
            if problem.preference.allowed(i, j) {
                m
            } else {
                m.max(1.0) * problem.penalty
            }
        })
        .sum()
}

/// Globally cheapest assignment and path set. Assignments are visited in
/// non-decreasing cost order and the loop stops once the next assignment
/// cannot beat the best path set found.
pub fn plan_optimal(inst: &PlanInstance, cfg: &CbsConfig) -> Result<PlanResult, PlanError> {
    let problem = AssignmentProblem::new(&inst.starts, &inst.movements, &inst.targets)?;
    let mut best: Option<PlanResult> = None;
    let mut trace = Vec::new();
    for (idx, a) in problem.ranked().enumerate() {
        let k = idx + 1;
        if let Some(b) = &best {
            if a.cost >= b.cost - 1e-9 * b.cost.max(1.0) {
                break;
            }
        }
        let planned = match cbs(inst, &a, cfg) {
            Ok(ps) => Some(ps),
            Err(PlanError::Infeasible { .. } | PlanError::BudgetExceeded(_)) => None,
            Err(e) => return Err(e),
        };
        let cost = planned.as_ref().map(|ps| weighted_cost(&problem, &a, ps));
        trace.push(TraceRow {
            k,
            assignment_cost: a.cost,
            path_cost: cost,
        });
        if let (Some(ps), Some(c)) = (planned, cost) {
            let better = match &best {
                None => true,
                Some(b) => (c, ps.cost.lateral) < (b.cost, b.paths.cost.lateral),
            };
            if better {
                best = Some(PlanResult {
                    assignment: a,
                    paths: ps,
                    cost: c,
                    trace: Vec::new(),
                });
            }
        }
    }
    let mut result = best.ok_or(PlanError::Infeasible { horizon: inst.horizon })?;
    result.trace = trace;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Leg, Turn};
    use std::collections::VecDeque;

    fn p(x: u32, y: u32) -> RcsPoint {
        RcsPoint::new(x, y)
    }

    fn path(cells: &[(u32, u32)]) -> RcsPath {
        RcsPath {
            vehicle: 0,
            cells: cells.iter().map(|&(x, y)| p(x, y)).collect(),
        }
    }

    /// Fewest moves over the space-time graph, by breadth-first layers.
    fn bfs_moves(grid: &RcsGrid, s: RcsPoint, g: RcsPoint, k: &ConstraintSet, horizon: usize) -> Option<u32> {
        let mut dist: HashMap<(RcsPoint, usize), u32> = HashMap::new();
        let mut dq = VecDeque::new();
        if !k.allows_start(s) {
            return None;
        }
        dist.insert((s, 0), 0);
        dq.push_back((s, 0usize));
        // 0-1 BFS: stays cost nothing.
        while let Some((c, t)) = dq.pop_front() {
            let d = dist[&(c, t)];
            if t == horizon {
                continue;
            }
            for n in neighbours(grid, c) {
                if !k.allows(c, n, t + 1) {
                    continue;
                }
                let w = u32::from(n != c);
                let e = dist.entry((n, t + 1)).or_insert(u32::MAX);
                if d + w < *e {
                    *e = d + w;
                    if w == 0 {
                        dq.push_front((n, t + 1));
                    } else {
                        dq.push_back((n, t + 1));
                    }
                }
            }
        }
        dist.get(&(g, horizon)).copied()
    }

    #[test]
    fn astar_trivial_cases() {
        let grid = RcsGrid::cells(3, 5);
        let k = ConstraintSet::new();
        let stay = astar(&grid, p(1, 1), p(1, 1), &k, 4).unwrap();
        assert_eq!(stay.cells.len(), 5);
        assert_eq!(stay.moves(), 0);
        let a = astar(&grid, p(0, 0), p(2, 1), &k, 5).unwrap();
        assert_eq!(a.moves(), 3);
        assert_eq!(a.lateral_moves(), 1);
        assert_eq!(a.cells.len(), 6);
        assert_eq!(*a.cells.last().unwrap(), p(2, 1));
        assert!(a.is_legal());
    }

    #[test]
    fn astar_detours_around_blocked_cell() {
        let grid = RcsGrid::cells(3, 3);
        let mut k = ConstraintSet::new();
        for t in 0..=8 {
            k.forbid_vertex(p(0, 1), t);
        }
        let a = astar(&grid, p(0, 0), p(0, 2), &k, 8).unwrap();
        assert_eq!(a.moves(), 4);
        assert_eq!(bfs_moves(&grid, p(0, 0), p(0, 2), &k, 8), Some(4));
        assert!(a.cells.iter().all(|c| *c != p(0, 1)));
    }

    #[test]
    fn astar_reports_infeasibility() {
        let grid = RcsGrid::cells(1, 3);
        let k = ConstraintSet::new();
        assert_eq!(astar(&grid, p(0, 0), p(2, 0), &k, 1), Err(PlanError::Infeasible { horizon: 1 }));
        let mut k = ConstraintSet::new();
        for t in 0..=4 {
            k.forbid_vertex(p(1, 0), t);
        }
        assert!(astar(&grid, p(0, 0), p(2, 0), &k, 4).is_err());
        assert_eq!(
            astar(&grid, p(0, 0), p(5, 0), &ConstraintSet::new(), 9),
            Err(PlanError::OutOfGrid(p(5, 0)))
        );
    }

    #[test]
    fn astar_matches_bfs_under_random_constraints() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let grid = RcsGrid::cells(3, 5);
        for _ in 0..300 {
            let horizon = rng.random_range(0..9usize);
            let mut k = ConstraintSet::new();
            for _ in 0..rng.random_range(0..12) {
                let c = p(rng.random_range(0..5), rng.random_range(0..3));
                k.forbid_vertex(c, rng.random_range(0..=horizon));
            }
            for _ in 0..rng.random_range(0..6) {
                let a = p(rng.random_range(0..5), rng.random_range(0..3));
                let b = neighbours(&grid, a).last().unwrap();
                k.forbid_edge(a, b, rng.random_range(1..=horizon.max(1)));
            }
            let s = p(rng.random_range(0..5), rng.random_range(0..3));
            let g = p(rng.random_range(0..5), rng.random_range(0..3));
            let got = astar(&grid, s, g, &k, horizon);
            let want = bfs_moves(&grid, s, g, &k, horizon);
            match (got, want) {
                (Ok(path), Some(m)) => {
                    assert_eq!(path.moves(), m);
                    assert!(path.is_legal());
                    assert_eq!(path.cells.len(), horizon + 1);
                    assert!(path.cells.windows(2).enumerate().all(|(t, w)| k.allows(w[0], w[1], t + 1)));
                }
                (Err(_), None) => {}
                (got, want) => panic!("astar {got:?} vs bfs {want:?}"),
            }
        }
    }

    #[test]
    fn detect_node_conflict_at_start() {
        let a = path(&[(0, 0), (0, 0)]);
        let c = detect_conflicts(&[a.clone(), a]);
        assert_eq!(c[0].kind, ConflictType::NodeI);
        assert_eq!(c[0].t, 0);
    }

    #[test]
    fn detect_each_kind() {
        let swap = detect_conflicts(&[path(&[(0, 0), (0, 1)]), path(&[(0, 1), (0, 0)])]);
        assert_eq!(swap.len(), 1);
        assert_eq!(swap[0].kind, ConflictType::Edge);

        let follow = detect_conflicts(&[path(&[(0, 0), (1, 0)]), path(&[(1, 0), (2, 0)])]);
        assert_eq!(follow.len(), 1);
        assert_eq!(follow[0].kind, ConflictType::Intermediate);
        assert_eq!(follow[0].vehicles, (0, 1));
        assert_eq!(follow[0].cell, p(1, 0));

        let reversed = detect_conflicts(&[path(&[(1, 0), (2, 0)]), path(&[(0, 0), (1, 0)])]);
        assert_eq!(reversed[0].vehicles, (1, 0));

        let into_stayer = detect_conflicts(&[path(&[(0, 0), (1, 0)]), path(&[(1, 0), (1, 0)])]);
        assert_eq!(into_stayer[0].kind, ConflictType::NodeII);

        let meet = detect_conflicts(&[path(&[(0, 0), (1, 0)]), path(&[(2, 0), (1, 0)])]);
        assert_eq!(meet[0].kind, ConflictType::NodeI);

        let clear = detect_conflicts(&[path(&[(0, 0), (0, 0)]), path(&[(2, 0), (2, 1)])]);
        assert!(clear.is_empty());
    }

    #[test]
    fn cbs_single_vehicle_is_astar() {
        let grid = RcsGrid::cells(3, 4);
        let ps = cbs_paths(&grid, &[p(0, 0)], &[p(3, 2)], 6, &CbsConfig::default()).unwrap();
        let a = astar(&grid, p(0, 0), p(3, 2), &ConstraintSet::new(), 6).unwrap();
        assert_eq!(ps.paths[0].cells, a.cells);
    }

    #[test]
    fn cbs_head_on_swap_uses_free_row() {
        let grid = RcsGrid::cells(2, 2);
        let ps = cbs_paths(&grid, &[p(0, 0), p(1, 0)], &[p(1, 0), p(0, 0)], 4, &CbsConfig::default()).unwrap();
        assert!(detect_conflicts(&ps.paths).is_empty());
        // One vehicle goes straight, the other detours through the free row.
        assert_eq!(ps.moves(), 4);
        let mut split: Vec<u32> = ps.paths.iter().map(RcsPath::moves).collect();
        split.sort();
        assert_eq!(split, vec![1, 3]);
    }

    #[test]
    fn single_sided_mode_still_conflict_free() {
        let grid = RcsGrid::cells(3, 4);
        let cfg = CbsConfig {
            mode: CbsMode::SingleSided,
            ..CbsConfig::default()
        };
        let ps = cbs_paths(&grid, &[p(0, 0), p(1, 0), p(2, 1)], &[p(1, 2), p(0, 2), p(0, 0)], 8, &cfg).unwrap();
        assert!(detect_conflicts(&ps.paths).is_empty());
    }

    fn mv(t: Turn) -> Movement {
        Movement::new(Leg::South, t)
    }

    #[test]
    fn plan_optimal_single_vehicle_in_place() {
        let inst = PlanInstance::new(
            RcsGrid::cells(3, 3),
            vec![p(1, 1)],
            vec![mv(Turn::Straight)],
            vec![Target {
                cell: p(1, 1),
                movement: mv(Turn::Straight),
            }],
        )
        .unwrap();
        let r = plan_optimal(&inst, &CbsConfig::default()).unwrap();
        assert_eq!(r.paths.moves(), 0);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn plan_optimal_prefers_conflict_free_second_assignment() {
        // Vehicle 0 is one diagonal step from its cheapest target, but both
        // orthogonal routes are occupied; handing its target to vehicle 1 is
        // cheaper once paths are planned.
        let (r, s) = (mv(Turn::Right), mv(Turn::Straight));
        let inst = PlanInstance::new(
            RcsGrid::cells(2, 4),
            vec![p(3, 0), p(2, 0), p(3, 1)],
            vec![r, r, s],
            vec![
                Target { cell: p(2, 1), movement: r },
                Target { cell: p(2, 0), movement: r },
                Target { cell: p(3, 1), movement: s },
            ],
        )
        .unwrap();
        let res = plan_optimal(&inst, &CbsConfig::default()).unwrap();
        assert_eq!(res.trace.len(), 2);
        assert_eq!(res.trace[0].path_cost, Some(4.0));
        assert_eq!(res.assignment.perm, vec![1, 0, 2]);
        assert_eq!(res.paths.moves(), 2);
        assert!(detect_conflicts(&res.paths.paths).is_empty());

        // Two lanes: the cheapest assignment crosses paths.
        let grid = RcsGrid::cells(2, 2);
        let (l, st) = (mv(Turn::Left), mv(Turn::Straight));
        let inst = PlanInstance::new(
            grid,
            vec![p(0, 1), p(0, 0)],
            vec![l, st],
            vec![Target { cell: p(1, 0), movement: l }, Target { cell: p(1, 1), movement: st }],
        )
        .unwrap();
        let r = plan_optimal(&inst, &CbsConfig::default()).unwrap();
        assert!(detect_conflicts(&r.paths.paths).is_empty());
        assert_eq!(r.assignment.perm, vec![0, 1]);
        for row in &r.trace {
            if let Some(c) = row.path_cost {
                assert!(row.assignment_cost <= c + 1e-9);
            }
        }
    }

    #[test]
    fn default_horizon_is_diameter_plus_group() {
        let s = mv(Turn::Straight);
        let inst = PlanInstance::new(
            RcsGrid::cells(3, 5),
            vec![p(0, 0), p(1, 0)],
            vec![s, s],
            vec![Target { cell: p(0, 0), movement: s }, Target { cell: p(1, 0), movement: s }],
        )
        .unwrap();
        assert_eq!(inst.horizon, 6 + 2);
        assert!(PlanInstance::new(RcsGrid::cells(1, 1), vec![p(0, 0)], vec![], vec![]).is_err());
    }
}

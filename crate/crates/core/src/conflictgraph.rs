//! Pairwise conflict classification for vehicles in the car-following zone,
//! the conflict directed graph (CDG) and its complement, the coexistence
//! graph (CUG).
//!
//! Graph nodes are 1-based ranks in car-following-zone entry order.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConflictKind, IntersectionSpec, VehicleState};

/// Kinematic limits entering the reachability test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityParams {
    pub cfz_length: f64,
    pub v_p: f64,
    pub v_max: f64,
    pub u_max: f64,
}

impl Default for ReachabilityParams {
    fn default() -> Self {
        Self {
            cfz_length: 500.0,
            v_p: 10.0,
            v_max: 15.0,
            u_max: 5.0,
        }
    }
}

impl ReachabilityParams {
    /// Distance to the stop line below which a predecessor cannot be joined.
    pub fn threshold(&self) -> f64 {
        self.v_p * (self.cfz_length / self.v_max + self.v_max / (2.0 * self.u_max))
    }
}

/// True when a newcomer at the zone entry cannot reach the stop line together
/// with a predecessor `l_prec` metres from it.
pub fn reachability_conflict(l_prec: f64, v_p: f64, l_cfz: f64, v_max: f64, u_max: f64) -> bool {
    l_prec / v_p < l_cfz / v_max + v_max / (2.0 * u_max)
}

/// How an earlier vehicle constrains a later one. Ordered by precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum PairClass {
    Diverging,
    Reachability,
    Crossing,
    Converging,
}

impl PairClass {
    /// Whether the pair keeps its arrival order (a unidirectional CDG edge).
    pub fn is_unidirectional(self) -> bool {
        matches!(self, PairClass::Diverging | PairClass::Reachability)
    }
}

/// Distance from the vehicle's position to its stop line.
pub fn distance_to_stop(spec: &IntersectionSpec, v: &VehicleState) -> f64 {
    (spec.ctrl_length() - v.position).max(0.0)
}

/// Classify `old` relative to `new`. `None` means the two may pass the stop
/// line together.
pub fn classify_pair(
    spec: &IntersectionSpec,
    params: &ReachabilityParams,
    new: &VehicleState,
    old: &VehicleState,
) -> Option<PairClass> {
    let kind = spec.movement_conflict(new.movement, old.movement, new.lane == old.lane);
    if kind == Some(ConflictKind::Diverging) {
        return Some(PairClass::Diverging);
    }
    let l = distance_to_stop(spec, old);
    if reachability_conflict(l, params.v_p, params.cfz_length, params.v_max, params.u_max) {
        return Some(PairClass::Reachability);
    }
    match kind {
        Some(ConflictKind::Crossing) => Some(PairClass::Crossing),
        Some(ConflictKind::Converging) => Some(PairClass::Converging),
        _ => None,
    }
}

/// Earlier vehicles conflicting with one vehicle, split by class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConflictSets {
    pub vehicle: u32,
    pub crossing: BTreeSet<u32>,
    pub diverging: BTreeSet<u32>,
    pub converging: BTreeSet<u32>,
    pub reachability: BTreeSet<u32>,
}

impl ConflictSets {
    pub fn class_of(&self, other: u32) -> Option<PairClass> {
        if self.diverging.contains(&other) {
            Some(PairClass::Diverging)
        } else if self.reachability.contains(&other) {
            Some(PairClass::Reachability)
        } else if self.crossing.contains(&other) {
            Some(PairClass::Crossing)
        } else if self.converging.contains(&other) {
            Some(PairClass::Converging)
        } else {
            None
        }
    }

    pub fn members(&self) -> impl Iterator<Item = u32> + '_ {
        self.diverging
            .iter()
            .chain(&self.reachability)
            .chain(&self.crossing)
            .chain(&self.converging)
            .copied()
    }
}

/// Conflict sets of `new` against vehicles already in the zone. Members are
/// vehicle ids.
pub fn build_conflict_sets(
    spec: &IntersectionSpec,
    params: &ReachabilityParams,
    new: &VehicleState,
    existing: &[VehicleState],
) -> ConflictSets {
    let mut sets = ConflictSets {
        vehicle: new.id,
        ..ConflictSets::default()
    };
    for old in existing {
        debug_assert!(old.id < new.id, "existing vehicles precede the newcomer");
        let slot = match classify_pair(spec, params, new, old) {
            Some(PairClass::Diverging) => &mut sets.diverging,
            Some(PairClass::Reachability) => &mut sets.reachability,
            Some(PairClass::Crossing) => &mut sets.crossing,
            Some(PairClass::Converging) => &mut sets.converging,
            None => continue,
        };
        slot.insert(old.id);
    }
    sets
}

/// Undirected simple graph on nodes `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UndirectedGraph {
    adj: Vec<BTreeSet<u32>>,
}

/// Coexistence graph: an edge means the pair may pass simultaneously.
pub type Cug = UndirectedGraph;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references a node outside 1..={2}")]
    NodeOutOfRange(u32, u32, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(u32),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl UndirectedGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 1..=n as u32 {
            for j in i + 1..=n as u32 {
                g.add_edge_unchecked(i, j);
            }
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        let mut g = Self::empty(n);
        for &(a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, a: u32, b: u32) -> Result<(), GraphError> {
        let n = self.n();
        if a == 0 || b == 0 || a as usize > n || b as usize > n {
            return Err(GraphError::NodeOutOfRange(a, b, n));
        }
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        self.add_edge_unchecked(a, b);
        Ok(())
    }

    fn add_edge_unchecked(&mut self, a: u32, b: u32) {
        self.adj[a as usize - 1].insert(b);
        self.adj[b as usize - 1].insert(a);
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = u32> {
        1..=self.n() as u32
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        a != b && a >= 1 && (a as usize) <= self.n() && self.adj[a as usize - 1].contains(&b)
    }

    pub fn neighbours(&self, a: u32) -> &BTreeSet<u32> {
        &self.adj[a as usize - 1]
    }

    /// Edges with `a < b`, in order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        self.nodes()
            .flat_map(|a| self.neighbours(a).iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn complement(&self) -> Self {
        let mut g = Self::empty(self.n());
        for a in self.nodes() {
            for b in a + 1..=self.n() as u32 {
                if !self.has_edge(a, b) {
                    g.add_edge_unchecked(a, b);
                }
            }
        }
        g
    }

    /// Whether every pair in `nodes` is adjacent.
    pub fn is_clique(&self, nodes: &[u32]) -> bool {
        nodes
            .iter()
            .enumerate()
            .all(|(k, &a)| nodes[k + 1..].iter().all(|&b| self.has_edge(a, b)))
    }

    /// Adjacency list text, one `i: j k` line per node.
    pub fn to_adjacency_text(&self) -> String {
        let mut s = String::new();
        for a in self.nodes() {
            let _ = write!(s, "{a}:");
            for b in self.neighbours(a) {
                let _ = write!(s, " {b}");
            }
            s.push('\n');
        }
        s
    }

    /// Parse `i: j k` lines. Blank lines and `#` comments are ignored, the
    /// node count is the largest label seen, and edges are symmetrised.
    pub fn parse_adjacency_text(text: &str) -> Result<Self, GraphError> {
        let mut rows: Vec<(u32, Vec<u32>)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| GraphError::Parse { line: k + 1, msg };
            let (head, tail) = line.split_once(':').ok_or_else(|| perr("missing ':'".into()))?;
            let node: u32 = head.trim().parse().map_err(|_| perr(format!("bad node label {head:?}")))?;
            let nbrs = tail
                .split_whitespace()
                .map(|t| t.parse::<u32>().map_err(|_| perr(format!("bad neighbour {t:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if node == 0 {
                return Err(perr("node labels start at 1".into()));
            }
            rows.push((node, nbrs));
        }
        let n = rows
            .iter()
            .flat_map(|(a, ns)| std::iter::once(*a).chain(ns.iter().copied()))
            .max()
            .unwrap_or(0) as usize;
        let mut g = Self::empty(n);
        for (a, ns) in rows {
            for b in ns {
                g.add_edge(a, b)?;
            }
        }
        Ok(g)
    }
}

/// Conflict directed graph. A unidirectional edge `(a, b)` means `a` must
/// pass before `b`; bidirectional edges are stored as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cdg {
    n: usize,
    unidirectional: BTreeSet<(u32, u32)>,
    bidirectional: BTreeSet<(u32, u32)>,
}

impl Cdg {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn unidirectional(&self) -> &BTreeSet<(u32, u32)> {
        &self.unidirectional
    }

    pub fn bidirectional(&self) -> &BTreeSet<(u32, u32)> {
        &self.bidirectional
    }

    /// Undirected support of both edge classes.
    pub fn support(&self) -> UndirectedGraph {
        let mut g = UndirectedGraph::empty(self.n);
        for &(a, b) in self.unidirectional.iter().chain(&self.bidirectional) {
            g.add_edge_unchecked(a, b);
        }
        g
    }

    /// Adjacency list text: `i: >j ~k` where `>j` is an edge from `i` to `j`
    /// and `~k` a bidirectional edge.
    pub fn to_adjacency_text(&self) -> String {
        let mut s = String::new();
        for a in 1..=self.n as u32 {
            let _ = write!(s, "{a}:");
            for &(_, b) in self.unidirectional.range((a, 0)..=(a, u32::MAX)) {
                let _ = write!(s, " >{b}");
            }
            let mut bi: Vec<u32> = self
                .bidirectional
                .iter()
                .filter_map(|&(x, y)| if x == a { Some(y) } else if y == a { Some(x) } else { None })
                .collect();
            bi.sort_unstable();
            for b in bi {
                let _ = write!(s, " ~{b}");
            }
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for Cdg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_adjacency_text())
    }
}

impl fmt::Display for UndirectedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_adjacency_text())
    }
}

/// CDG from conflict sets given in node order: `sets[k]` belongs to node
/// `k + 1` and its members are node labels.
pub fn build_cdg(sets: &[ConflictSets]) -> Cdg {
    let mut cdg = Cdg {
        n: sets.len(),
        unidirectional: BTreeSet::new(),
        bidirectional: BTreeSet::new(),
    };
    for s in sets {
        let i = s.vehicle;
        for j in s.diverging.iter().chain(&s.reachability) {
            cdg.unidirectional.insert((*j, i));
        }
        for &j in s.crossing.iter().chain(&s.converging) {
            cdg.bidirectional.insert((j.min(i), j.max(i)));
        }
    }
    cdg
}

/// Conflict sets for vehicles listed in zone-entry order, relabelled to node
/// ranks `1..=n`.
pub fn rank_conflict_sets(
    spec: &IntersectionSpec,
    params: &ReachabilityParams,
    vehicles: &[VehicleState],
) -> Vec<ConflictSets> {
    let ranked: Vec<VehicleState> = vehicles
        .iter()
        .enumerate()
        .map(|(k, v)| VehicleState {
            id: k as u32 + 1,
            ..v.clone()
        })
        .collect();
    (0..ranked.len())
        .map(|k| build_conflict_sets(spec, params, &ranked[k], &ranked[..k]))
        .collect()
}

/// Coexistence graph: complement of the CDG's support.
pub fn complement(cdg: &Cdg) -> Cug {
    cdg.support().complement()
}

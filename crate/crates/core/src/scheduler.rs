//! Passing order from a clique cover of the coexistence graph, arranged as a
//! layered spanning tree under a virtual leader (node 0).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::conflictgraph::{build_cdg, complement, distance_to_stop, rank_conflict_sets, Cdg, Cug, ReachabilityParams};
use crate::geometry::{IntersectionSpec, LaneRef, VehicleState};

/// Largest graph the exact cover accepts.
pub const MCC_EXACT_MAX_NODES: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("exact clique cover supports at most {max} nodes, got {got}")]
    TooLarge { max: usize, got: usize },
}

/// Partition of the graph's nodes into cliques.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliqueCover {
    pub cliques: Vec<Vec<u32>>,
}

impl CliqueCover {
    /// Sorts members within each clique; clique order is kept.
    pub fn new(mut cliques: Vec<Vec<u32>>) -> Self {
        for c in &mut cliques {
            c.sort_unstable();
        }
        Self { cliques }
    }

    pub fn k(&self) -> usize {
        self.cliques.len()
    }

    /// Disjoint, covers `1..=n`, and every part is a clique of `cug`.
    pub fn is_valid(&self, cug: &Cug) -> bool {
        let mut seen = BTreeSet::new();
        for c in &self.cliques {
            if c.is_empty() || !cug.is_clique(c) {
                return false;
            }
            for &v in c {
                if v == 0 || v as usize > cug.n() || !seen.insert(v) {
                    return false;
                }
            }
        }
        seen.len() == cug.n()
    }
}

/// Greedy cover: colour the conflict graph (the CUG's complement) in
/// breadth-first order, each node taking the smallest free colour.
pub fn mcc_heuristic(cug: &Cug) -> CliqueCover {
    let conflict = cug.complement();
    let n = cug.n();
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n + 1];
    for root in 1..=n as u32 {
        if visited[root as usize] {
            continue;
        }
        visited[root as usize] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in conflict.neighbours(v) {
                if !visited[w as usize] {
                    visited[w as usize] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    let mut colour = vec![usize::MAX; n + 1];
    let mut cliques: Vec<Vec<u32>> = Vec::new();
    for v in order {
        let taken: BTreeSet<usize> = conflict.neighbours(v).iter().map(|&w| colour[w as usize]).collect();
        let c = (0..).find(|c| !taken.contains(c)).expect("a free colour exists");
        colour[v as usize] = c;
        if c == cliques.len() {
            cliques.push(Vec::new());
        }
        cliques[c].push(v);
    }
    CliqueCover::new(cliques)
}

/// Minimum clique cover by dynamic programming over node subsets.
pub fn mcc_exact(cug: &Cug) -> Result<CliqueCover, ScheduleError> {
    let n = cug.n();
    if n > MCC_EXACT_MAX_NODES {
        return Err(ScheduleError::TooLarge {
            max: MCC_EXACT_MAX_NODES,
            got: n,
        });
    }
    let full = (1usize << n) - 1;
    let adj: Vec<usize> = (1..=n as u32)
        .map(|a| cug.neighbours(a).iter().fold(0, |m, &b| m | 1 << (b - 1)))
        .collect();
    let mut clique = vec![false; full + 1];
    clique[0] = true;
    for mask in 1..=full {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        clique[mask] = clique[rest] && adj[low] & rest == rest;
    }
    let mut best = vec![u32::MAX; full + 1];
    let mut choice = vec![0usize; full + 1];
    best[0] = 0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let part = sub | low;
            if clique[part] && best[mask ^ part] + 1 < best[mask] {
                best[mask] = best[mask ^ part] + 1;
                choice[mask] = part;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    let mut cliques = Vec::new();
    let mut mask = full;
    while mask != 0 {
        let part = choice[mask];
        cliques.push((0..n).filter(|b| part >> b & 1 == 1).map(|b| b as u32 + 1).collect());
        mask ^= part;
    }
    Ok(CliqueCover::new(cliques))
}

/// Lane and distance to the stop line of one graph node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LanePosition {
    pub vehicle: u32,
    pub lane: LaneRef,
    pub distance_to_stop: f64,
}

/// Pairs `(ahead, behind)` sharing a lane.
pub fn same_lane_precedences(lanes: &[LanePosition]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for a in lanes {
        for b in lanes {
            let ahead = a.distance_to_stop < b.distance_to_stop
                || (a.distance_to_stop == b.distance_to_stop && a.vehicle < b.vehicle);
            if a.vehicle != b.vehicle && a.lane == b.lane && ahead {
                out.push((a.vehicle, b.vehicle));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Layered passing order. Layer `d` (1-based) passes the stop line in slot
/// `d`; node 0 is the virtual leader.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpanningTree {
    pub layers: Vec<Vec<u32>>,
    /// True when precedence repair only exchanged vehicles between layers.
    pub repaired_by_swaps: bool,
}

impl SpanningTree {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn depth_of(&self, v: u32) -> Option<usize> {
        self.layers.iter().position(|l| l.contains(&v)).map(|d| d + 1)
    }

    /// Parent of a vehicle: the smallest id of the previous layer, or 0.
    pub fn parent_of(&self, v: u32) -> Option<u32> {
        let d = self.depth_of(v)?;
        Some(if d == 1 { 0 } else { self.layers[d - 2][0] })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    /// Sum of depths over all vehicles, i.e. `sum_d d * |V_d|`.
    pub fn depth_sum(&self) -> usize {
        self.layers.iter().enumerate().map(|(d, l)| (d + 1) * l.len()).sum()
    }

    /// `(vehicle, parent, depth)` for every vehicle, by vehicle id.
    pub fn parent_list(&self) -> Vec<(u32, u32, usize)> {
        let mut rows: Vec<(u32, u32, usize)> = self
            .layers
            .iter()
            .enumerate()
            .flat_map(|(d, l)| {
                let parent = if d == 0 { 0 } else { self.layers[d - 1][0] };
                l.iter().map(move |&v| (v, parent, d + 1))
            })
            .collect();
        rows.sort_unstable();
        rows
    }

    /// One `vehicle parent depth` line per vehicle.
    pub fn to_parent_text(&self) -> String {
        let mut s = String::new();
        for (v, p, d) in self.parent_list() {
            let _ = writeln!(s, "{v} {p} {d}");
        }
        s
    }
}

fn sort_descending(cliques: &mut [Vec<u32>]) {
    cliques.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
}

/// Exchange vehicles across layers until every `(before, after)` pair is
/// ordered. Returns false if some violation cannot be fixed by a swap that
/// keeps every layer a clique.
fn swap_repair(layers: &mut [Vec<u32>], cug: &Cug, prec: &[(u32, u32)]) -> bool {
    let n: usize = layers.iter().map(Vec::len).sum();
    for _ in 0..=n * n {
        let depth: BTreeMap<u32, usize> = layers
            .iter()
            .enumerate()
            .flat_map(|(d, l)| l.iter().map(move |&v| (v, d)))
            .collect();
        let violation = prec.iter().find(|(a, b)| match (depth.get(a), depth.get(b)) {
            (Some(da), Some(db)) => da >= db,
            _ => false,
        });
        let Some(&(a, b)) = violation else {
            return true;
        };
        let (la, lb) = (depth[&a], depth[&b]);
        if la == lb {
            return false;
        }
        let moved = |layer: &[u32], out: u32, inn: u32| -> Vec<u32> {
            let mut l: Vec<u32> = layer.iter().copied().filter(|&v| v != out).chain([inn]).collect();
            l.sort_unstable();
            l
        };
        let new_a = moved(&layers[la], a, b);
        let new_b = moved(&layers[lb], b, a);
        if !cug.is_clique(&new_a) || !cug.is_clique(&new_b) {
            return false;
        }
        layers[la] = new_a;
        layers[lb] = new_b;
    }
    false
}

/// Re-layer so that every precedence holds, taking members of the earliest
/// clique whose predecessors have all passed. Layers stay cliques; the
/// depth may grow.
fn relayer(layers: &[Vec<u32>], prec: &[(u32, u32)]) -> Vec<Vec<u32>> {
    let mut remaining: Vec<Vec<u32>> = layers.to_vec();
    let mut placed: BTreeSet<u32> = BTreeSet::new();
    let mut out = Vec::new();
    while remaining.iter().any(|l| !l.is_empty()) {
        let ready = |v: u32, placed: &BTreeSet<u32>| prec.iter().all(|&(a, b)| b != v || placed.contains(&a));
        let mut progressed = false;
        for clique in remaining.iter_mut() {
            let layer: Vec<u32> = clique.iter().copied().filter(|&v| ready(v, &placed)).collect();
            if layer.is_empty() {
                continue;
            }
            clique.retain(|v| !layer.contains(v));
            placed.extend(layer.iter().copied());
            out.push(layer);
            progressed = true;
            break;
        }
        if !progressed {
            // Cyclic precedences: fall back to id order for what is left.
            let mut rest: Vec<u32> = remaining.iter().flatten().copied().collect();
            rest.sort_unstable();
            out.extend(rest.into_iter().map(|v| vec![v]));
            break;
        }
    }
    out
}

/// Layers in descending clique size (ties: smallest member first), then
/// repaired so that each `(before, after)` precedence pair is ordered.
pub fn build_spanning_tree_with(cover: &CliqueCover, cug: &Cug, prec: &[(u32, u32)]) -> SpanningTree {
    let mut layers: Vec<Vec<u32>> = cover.cliques.iter().filter(|c| !c.is_empty()).cloned().collect();
    sort_descending(&mut layers);
    let swapped = swap_repair(&mut layers, cug, prec);
    let layers = if swapped { layers } else { relayer(&layers, prec) };
    SpanningTree {
        layers,
        repaired_by_swaps: swapped,
    }
}

/// Spanning tree honouring in-lane order.
pub fn build_spanning_tree(cover: &CliqueCover, cug: &Cug, lanes: &[LanePosition]) -> SpanningTree {
    build_spanning_tree_with(cover, cug, &same_lane_precedences(lanes))
}

/// Graphs, cover and tree of one scheduling event.
#[derive(Debug, Clone, Serialize)]
pub struct Schedule {
    pub cdg: Cdg,
    pub cug: Cug,
    pub cover: CliqueCover,
    pub tree: SpanningTree,
}

/// Passing order for vehicles listed in zone-entry order; tree nodes are
/// their 1-based ranks. Every unidirectional conflict is honoured.
pub fn schedule(spec: &IntersectionSpec, params: &ReachabilityParams, vehicles: &[VehicleState]) -> Schedule {
    let cdg = build_cdg(&rank_conflict_sets(spec, params, vehicles));
    let cug = complement(&cdg);
    let cover = mcc_heuristic(&cug);
    let lanes: Vec<LanePosition> = vehicles
        .iter()
        .enumerate()
        .map(|(k, v)| LanePosition {
            vehicle: k as u32 + 1,
            lane: v.lane,
            distance_to_stop: distance_to_stop(spec, v),
        })
        .collect();
    let mut prec: Vec<(u32, u32)> = cdg.unidirectional().iter().copied().collect();
    prec.extend(same_lane_precedences(&lanes));
    prec.sort_unstable();
    prec.dedup();
    let tree = build_spanning_tree_with(&cover, &cug, &prec);
    Schedule { cdg, cug, cover, tree }
}

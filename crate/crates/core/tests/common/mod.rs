//! Brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::HashMap;

use junction_core::{Movement, RcsGrid, RcsPoint};

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                go(prefix, used, out);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

pub fn perm_cost(rows: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| rows[i][j]).sum()
}

/// Minimum over every permutation.
pub fn brute_assignment(rows: &[Vec<f64>]) -> f64 {
    permutations(rows.len())
        .iter()
        .map(|p| perm_cost(rows, p))
        .fold(f64::INFINITY, f64::min)
}

/// Cells reachable in one step: stay or a unit orthogonal move.
pub fn steps(grid: &RcsGrid, c: RcsPoint) -> Vec<RcsPoint> {
    let mut out = vec![c];
    let (x, y) = (c.x as i64, c.y as i64);
    for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
        let (nx, ny) = (x + dx, y + dy);
        if nx >= 0 && ny >= 0 {
            let p = RcsPoint::new(nx as u32, ny as u32);
            if grid.contains(p) {
                out.push(p);
            }
        }
    }
    out
}

/// A joint step is safe when the new cells are distinct and nobody moves
/// into a cell another vehicle occupied just before.
pub fn joint_step_ok(prev: &[RcsPoint], next: &[RcsPoint]) -> bool {
    for i in 0..next.len() {
        for j in 0..next.len() {
            if i == j {
                continue;
            }
            if next[i] == next[j] {
                return false;
            }
            if next[i] != prev[i] && next[i] == prev[j] {
                return false;
            }
        }
    }
    true
}

/// Penalised cost of a full plan instance, mirroring the planner's scale:
/// `moves` for a preferred pair, `max(moves, 1) * penalty` otherwise.
pub struct JointProblem<'a> {
    pub grid: RcsGrid,
    pub starts: &'a [RcsPoint],
    pub movements: &'a [Movement],
    pub targets: &'a [(RcsPoint, Movement)],
    pub horizon: usize,
}

impl JointProblem<'_> {
    pub fn penalty(&self) -> f64 {
        let mut max = 0.0f64;
        for s in self.starts {
            for (t, _) in self.targets {
                let (dx, dy) = (s.x as f64 - t.x as f64, s.y as f64 - t.y as f64);
                max = max.max((dx * dx + dy * dy).sqrt());
            }
        }
        1e6 * (max + 1.0)
    }

    /// Cheapest conflict-free joint plan for one assignment, by dynamic
    /// programming over joint states. `None` when no plan fits the horizon.
    pub fn joint_cost(&self, perm: &[usize]) -> Option<f64> {
        let n = self.starts.len();
        let m = self.penalty();
        let goals: Vec<RcsPoint> = perm.iter().map(|&j| self.targets[j].0).collect();
        let preferred: Vec<bool> = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| self.targets[j].1 == self.movements[i])
            .collect();
        let weight: Vec<f64> = preferred.iter().map(|&p| if p { 1.0 } else { m }).collect();
        // Penalised vehicles already on their goal pay `penalty` if they never move.
        let idle_charge: Vec<bool> = (0..n).map(|i| !preferred[i] && self.starts[i] == goals[i]).collect();

        let mut layer: HashMap<(Vec<RcsPoint>, u8), f64> = HashMap::new();
        layer.insert((self.starts.to_vec(), 0), 0.0);
        for t in 0..self.horizon {
            let left = (self.horizon - t - 1) as u32;
            let mut next: HashMap<(Vec<RcsPoint>, u8), f64> = HashMap::new();
            for ((pos, moved), cost) in &layer {
                let options: Vec<Vec<RcsPoint>> = (0..n)
                    .map(|i| {
                        steps(&self.grid, pos[i])
                            .into_iter()
                            .filter(|c| c.manhattan(goals[i]) <= left)
                            .collect()
                    })
                    .collect();
                if options.iter().any(Vec::is_empty) {
                    continue;
                }
                let mut choice = vec![0usize; n];
                loop {
                    let cand: Vec<RcsPoint> = (0..n).map(|i| options[i][choice[i]]).collect();
                    if joint_step_ok(pos, &cand) {
                        let mut c = *cost;
                        let mut mask = *moved;
                        for i in 0..n {
                            if cand[i] != pos[i] {
                                c += weight[i];
                                mask |= 1 << i;
                            }
                        }
                        let e = next.entry((cand, mask)).or_insert(f64::INFINITY);
                        *e = e.min(c);
                    }
                    // Odometer over the per-vehicle options.
                    let mut i = 0;
                    while i < n {
                        choice[i] += 1;
                        if choice[i] < options[i].len() {
                            break;
                        }
                        choice[i] = 0;
                        i += 1;
                    }
                    if i == n {
                        break;
                    }
                }
            }
            layer = next;
        }
        layer
            .into_iter()
            .filter(|((pos, _), _)| *pos == goals)
            .map(|((_, mask), c)| {
                let extra: f64 = (0..n).filter(|&i| idle_charge[i] && mask & (1 << i) == 0).map(|_| m).sum();
                c + extra
            })
            .reduce(f64::min)
    }

    /// Minimum over every assignment and every conflict-free joint plan.
    pub fn optimum(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for perm in permutations(self.starts.len()) {
            if let Some(c) = self.joint_cost(&perm) {
                best = Some(best.map_or(c, |b: f64| b.min(c)));
            }
        }
        best
    }
}

/// Every walk of `horizon` steps on `grid` from any start cell.
pub fn all_walks(grid: &RcsGrid, horizon: usize) -> Vec<Vec<RcsPoint>> {
    let mut walks: Vec<Vec<RcsPoint>> = (0..grid.slot_count)
        .flat_map(|x| (0..grid.lane_count).map(move |y| vec![RcsPoint::new(x, y)]))
        .collect();
    for _ in 0..horizon {
        walks = walks
            .into_iter()
            .flat_map(|w| {
                let last = *w.last().expect("non-empty walk");
                steps(grid, last).into_iter().map(move |c| {
                    let mut w2 = w.clone();
                    w2.push(c);
                    w2
                })
            })
            .collect();
    }
    walks
}

/// Conflicting steps of two walks, found by replaying cell occupancy: each
/// step records who holds which cell before and after, and who moved.
pub fn occupancy_conflicts(a: &[RcsPoint], b: &[RcsPoint]) -> Vec<(usize, &'static str)> {
    let mut out = Vec::new();
    for t in 0..a.len() {
        let mut after: HashMap<RcsPoint, Vec<usize>> = HashMap::new();
        after.entry(a[t]).or_default().push(0);
        after.entry(b[t]).or_default().push(1);
        if t == 0 {
            if after.values().any(|v| v.len() > 1) {
                out.push((t, "node-I"));
            }
            continue;
        }
        let before = [a[t - 1], b[t - 1]];
        let now = [a[t], b[t]];
        let moved = [before[0] != now[0], before[1] != now[1]];
        if after.values().any(|v| v.len() > 1) {
            out.push((t, if moved[0] == moved[1] { "node-I" } else { "node-II" }));
        } else if now[0] == before[1] && now[1] == before[0] && moved[0] {
            out.push((t, "edge"));
        } else if moved[0] && moved[1] && (now[0] == before[1] || now[1] == before[0]) {
            out.push((t, "intermediate"));
        }
    }
    out
}

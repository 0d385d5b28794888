//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use junction_core::assignment::{kth_best_assignments, solve_assignment, CostMatrix, Target};
use junction_core::conflictgraph::{reachability_conflict, Cug, ReachabilityParams};
use junction_core::control::{euler_step, plf_topology, platoon_errors, stage2_accel, ControllerGains, Limits, PlatoonMember};
use junction_core::pathplan::{detect_conflicts, plan_optimal, CbsConfig, PlanError, PlanInstance, RcsPath};
use junction_core::scheduler::{build_spanning_tree, mcc_exact, mcc_heuristic, CliqueCover, LanePosition, SpanningTree};
use junction_core::sim::{simulate, ArrivalProcess, Pipeline, RunStatus, SimConfig};
use junction_core::{LaneRef, Leg, Movement, RcsGrid, RcsPoint, Turn};

use common::{all_walks, brute_assignment, occupancy_conflicts, perm_cost, permutations, JointProblem};

/// Cost comparisons on the assignment scale.
const COST_TOL: f64 = 1e-9;
const THRESHOLD_TOL: f64 = 0.01;
const SPACING_TOL: f64 = 0.1;
const SPEED_TOL: f64 = 0.1;
const POISSON_MEAN_TOL: f64 = 0.05;
const POISSON_VAR_TOL: f64 = 0.10;
const ATTD_SLACK: f64 = 0.05;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed <= limit, format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn table1_cug() -> Cug {
    Cug::from_edges(7, &[(1, 2), (1, 3), (1, 5), (1, 6), (3, 5), (3, 6), (4, 7)]).expect("valid graph")
}

fn mcc_worked_example() -> Outcome {
    let start = Instant::now();
    let g = table1_cug();
    let theta = mcc_exact(&g).map_err(|e| e.to_string())?.k();
    let k = mcc_heuristic(&g).k();
    check(theta == 4, format!("exact theta = {theta}"))?;
    check(k == 4, format!("heuristic k = {k}"))?;
    let cover = CliqueCover::new(vec![vec![1, 3, 5], vec![4, 7], vec![2], vec![6]]);
    check(cover.is_valid(&g) && cover.k() == theta, "reference cover is not a minimum cover")?;
    let tree = build_spanning_tree(&cover, &g, &[]);
    check(tree.depth() == 4, format!("tree depth {}", tree.depth()))?;
    check(tree.layer_sizes() == vec![3, 2, 1, 1], format!("layer sizes {:?}", tree.layer_sizes()))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("theta={theta} k={k} layers={:?}", tree.layer_sizes()))
}

fn lemma1_repair() -> Outcome {
    let g = table1_cug();
    let lane = LaneRef { leg: Leg::South, index: 1 };
    let lanes = [
        LanePosition { vehicle: 5, lane, distance_to_stop: 100.0 },
        LanePosition { vehicle: 6, lane, distance_to_stop: 130.0 },
    ];
    let solution2 = CliqueCover::new(vec![vec![1, 3, 6], vec![4, 7], vec![2], vec![5]]);
    check(solution2.is_valid(&g), "input cover invalid")?;
    let tree = build_spanning_tree(&solution2, &g, &lanes);
    let (d5, d6) = (tree.depth_of(5), tree.depth_of(6));
    check(d5 < d6, format!("depth(5)={d5:?} depth(6)={d6:?}"))?;
    let repaired = CliqueCover::new(tree.layers.clone());
    check(repaired.is_valid(&g) && repaired.k() == 4, "repaired layers are not a 4-clique cover")?;
    Ok(format!("depth(5)={} depth(6)={} layers={:?}", d5.unwrap_or(0), d6.unwrap_or(0), tree.layers))
}

fn assignment_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA551);
    let mut ranked = 0;
    for case in 0..200 {
        let n = rng.random_range(1..=7);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| f64::from(rng.random_range(0..20u32)) / 2.0).collect())
            .collect();
        let cost = CostMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let got = solve_assignment(&cost);
        let want = brute_assignment(&rows);
        check(got.is_bijection(), format!("case {case}: not a bijection"))?;
        check((got.cost - want).abs() <= COST_TOL, format!("case {case}: {} vs brute {want}", got.cost))?;
        if n <= 4 {
            let all = permutations(n);
            let mut want: Vec<f64> = all.iter().map(|p| perm_cost(&rows, p)).collect();
            want.sort_by(f64::total_cmp);
            let stream: Vec<_> = kth_best_assignments(&cost, all.len() + 1).collect();
            check(stream.len() == all.len(), format!("case {case}: stream length {}", stream.len()))?;
            let mut seen: Vec<Vec<usize>> = stream.iter().map(|a| a.perm.clone()).collect();
            seen.sort();
            check(seen == all, format!("case {case}: stream misses permutations"))?;
            for (a, w) in stream.iter().zip(&want) {
                check((a.cost - w).abs() <= COST_TOL, format!("case {case}: ranked {} vs {w}", a.cost))?;
            }
            ranked += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("200 instances, {ranked} fully ranked, {:.2?}", start.elapsed()))
}

fn stage1_global_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E0);
    let (mut feasible, mut rows) = (0, 0);
    for case in 0..100 {
        let lanes = rng.random_range(1..=3u32);
        let slots = rng.random_range(1..=5u32);
        let cells: Vec<RcsPoint> = (0..slots).flat_map(|x| (0..lanes).map(move |y| RcsPoint::new(x, y))).collect();
        let n = rng.random_range(1..=4usize.min(cells.len()));
        let horizon = rng.random_range(1..=8usize);
        let starts: Vec<RcsPoint> = cells.choose_multiple(&mut rng, n).copied().collect();
        let goal_cells: Vec<RcsPoint> = cells.choose_multiple(&mut rng, n).copied().collect();
        let target_moves: Vec<Movement> = (0..n)
            .map(|_| Movement::new(Leg::South, Turn::ALL[rng.random_range(0..3)]))
            .collect();
        let mut movements = target_moves.clone();
        movements.shuffle(&mut rng);
        let targets: Vec<Target> = goal_cells
            .iter()
            .zip(&target_moves)
            .map(|(&cell, &movement)| Target { cell, movement })
            .collect();
        let grid = RcsGrid::cells(lanes, slots);
        let inst = PlanInstance::with_horizon(grid, starts.clone(), movements.clone(), targets.clone(), horizon)
            .map_err(|e| e.to_string())?;
        let oracle_targets: Vec<(RcsPoint, Movement)> = targets.iter().map(|t| (t.cell, t.movement)).collect();
        let oracle = JointProblem {
            grid,
            starts: &starts,
            movements: &movements,
            targets: &oracle_targets,
            horizon,
        }
        .optimum();
        match (plan_optimal(&inst, &CbsConfig::default()), oracle) {
            (Ok(res), Some(best)) => {
                check(
                    (res.cost - best).abs() <= COST_TOL * best.max(1.0),
                    format!("case {case}: planner {} vs brute force {best}", res.cost),
                )?;
                check(detect_conflicts(&res.paths.paths).is_empty(), format!("case {case}: conflicting paths"))?;
                for row in &res.trace {
                    if let Some(c) = row.path_cost {
                        check(
                            row.assignment_cost <= c + COST_TOL * c.max(1.0),
                            format!("case {case}: C_{} = {} > C'_{} = {c}", row.k, row.assignment_cost, row.k),
                        )?;
                    }
                    rows += 1;
                }
                feasible += 1;
            }
            (Err(PlanError::Infeasible { .. }), None) => {}
            (got, want) => return Err(format!("case {case}: planner {got:?} vs brute force {want:?}")),
        }
    }
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!("100 instances ({feasible} feasible), {rows} trace rows, {:.2?}", start.elapsed()))
}

fn conflict_detection() -> Outcome {
    let grid = RcsGrid::cells(2, 3);
    let mut pairs = 0u64;
    for horizon in 1..=4 {
        let walks = all_walks(&grid, horizon);
        let paths: Vec<RcsPath> = walks
            .iter()
            .map(|cells| RcsPath { vehicle: 0, cells: cells.clone() })
            .collect();
        for (i, a) in walks.iter().enumerate() {
            for (j, b) in walks.iter().enumerate() {
                let mut pb = paths[j].clone();
                pb.vehicle = 1;
                let found: Vec<(usize, String)> = detect_conflicts(&[paths[i].clone(), pb])
                    .iter()
                    .map(|c| (c.t, c.kind.to_string()))
                    .collect();
                let want: Vec<(usize, String)> = occupancy_conflicts(a, b)
                    .into_iter()
                    .map(|(t, k)| (t, k.to_string()))
                    .collect();
                check(found == want, format!("{a:?} vs {b:?}: {found:?} != {want:?}"))?;
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} ordered path pairs agree"))
}

fn reachability_threshold() -> Outcome {
    let p = ReachabilityParams::default();
    let flip = |l: f64| reachability_conflict(l, p.v_p, p.cfz_length, p.v_max, p.u_max);
    let t = p.threshold();
    check((t - 348.33).abs() <= THRESHOLD_TOL, format!("threshold {t:.4}"))?;
    check(flip(348.33 - THRESHOLD_TOL), "no conflict just below 348.33 m")?;
    check(!flip(348.33 + THRESHOLD_TOL), "conflict just above 348.33 m")?;
    // Bisect the flip point independently of the closed form.
    let (mut lo, mut hi) = (0.0, 1000.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if flip(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    check((lo - 348.33).abs() <= THRESHOLD_TOL, format!("bisected flip at {lo:.4}"))?;
    Ok(format!("flip at {lo:.3} m"))
}

fn platoon_run(initial: &[(f64, f64)]) -> (f64, f64, bool) {
    let g = ControllerGains::default();
    let l = Limits::default();
    let tree = SpanningTree {
        layers: vec![vec![1, 3, 5], vec![4, 7], vec![2], vec![6]],
        repaired_by_swaps: true,
    };
    let topo = plf_topology(&tree);
    let depth: BTreeMap<u32, u32> = tree.parent_list().iter().map(|&(v, _, d)| (v, d as u32)).collect();
    let mut leader = PlatoonMember { p: 300.0, v: g.v_p, depth: 0 };
    let mut state: BTreeMap<u32, PlatoonMember> = depth
        .iter()
        .zip(initial)
        .map(|((&v, &d), &(e, ev))| {
            let p = leader.p + g.d_f * f64::from(d) + e;
            (v, PlatoonMember { p, v: g.v_p + ev, depth: d })
        })
        .collect();
    let dt = 0.1;
    let mut bounded = true;
    for _ in 0..1200 {
        let snapshot = state.clone();
        for (id, me) in state.iter_mut() {
            let sources: Vec<PlatoonMember> = topo[id]
                .iter()
                .map(|&s| if s == 0 { leader } else { snapshot[&s] })
                .collect();
            let u = stage2_accel(&snapshot[id], &sources, &g, &l);
            bounded &= (l.u_min..=l.u_max).contains(&u);
            let (dx, nv) = euler_step(me.v, u, dt, &l);
            me.p -= dx;
            me.v = nv;
            bounded &= (l.v_min..=l.v_max).contains(&me.v);
        }
        leader.p -= leader.v * dt;
    }
    state.values().fold((0.0, 0.0, bounded), |(e, ev, ok), me| {
        let (de, dv) = platoon_errors(me, &leader, &g);
        (e.max(de.abs()), ev.max(dv.abs()), ok)
    })
}

fn controller_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    let mut cases: Vec<Vec<(f64, f64)>> = vec![
        vec![(50.0, 5.0); 7],
        vec![(-50.0, -5.0); 7],
        (0..7).map(|k| if k % 2 == 0 { (50.0, -5.0) } else { (-50.0, 5.0) }).collect(),
    ];
    cases.extend((0..200).map(|_| {
        (0..7)
            .map(|_| (rng.random_range(-50.0..=50.0), rng.random_range(-5.0..=5.0)))
            .collect()
    }));
    let (mut worst_e, mut worst_v) = (0.0f64, 0.0f64);
    for (k, init) in cases.iter().enumerate() {
        let (e, ev, ok) = platoon_run(init);
        check(ok, format!("case {k}: input or speed left its bounds"))?;
        check(e < SPACING_TOL && ev < SPEED_TOL, format!("case {k}: spacing {e:.4} m, speed {ev:.4} m/s"))?;
        worst_e = worst_e.max(e);
        worst_v = worst_v.max(ev);
    }
    Ok(format!("{} cases, worst spacing {worst_e:.2e} m, worst speed {worst_v:.2e} m/s at 120 s", cases.len()))
}

fn poisson_sampler() -> Outcome {
    let process = ArrivalProcess::new(2.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| process.sample_count(&mut rng) as f64).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    check((mean - 2.0).abs() <= POISSON_MEAN_TOL * 2.0, format!("mean {mean:.4}"))?;
    check((var - 2.0).abs() <= POISSON_VAR_TOL * 2.0, format!("variance {var:.4}"))?;
    Ok(format!("mean {mean:.4}, variance {var:.4}"))
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let proposed = Pipeline::PROPOSED;
    let baseline: Pipeline = "fclc+constant-tl".parse().map_err(|e: junction_core::sim::ConfigError| e.to_string())?;
    let mut sums = [[0.0f64; 2]; 2];
    for seed in 1..=10u64 {
        for (k, p) in [proposed, baseline].into_iter().enumerate() {
            let cfg = SimConfig {
                seed,
                vehicles: 50,
                volume: 2000.0,
                ..SimConfig::default()
            }
            .with_pipeline(p);
            let r = simulate(&cfg, None).map_err(|e| format!("{p} seed {seed}: {e}"))?.report;
            check(r.collisions == 0, format!("{p} seed {seed}: {} collisions", r.collisions))?;
            check(r.status == RunStatus::Completed, format!("{p} seed {seed}: {:?}", r.status))?;
            sums[k][0] += r.t_evc.ok_or("missing t_evc")?;
            sums[k][1] += r.t_attd.ok_or("missing t_attd")?;
        }
    }
    let [[evc_p, attd_p], [evc_b, attd_b]] = sums.map(|s| s.map(|x| x / 10.0));
    check(evc_p < evc_b, format!("mean t_evc {evc_p:.1} s vs constant signal {evc_b:.1} s"))?;
    check(
        attd_p <= attd_b * (1.0 + ATTD_SLACK),
        format!("mean ATTD {attd_p:.1} s vs constant signal {attd_b:.1} s"),
    )?;
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(format!(
        "t_evc {evc_p:.1} vs {evc_b:.1} s, ATTD {attd_p:.1} vs {attd_b:.1} s, {:.1?}",
        start.elapsed()
    ))
}

fn determinism() -> Outcome {
    let mut checked = 0;
    for p in Pipeline::ALL {
        for seed in [3u64, 11] {
            let cfg = SimConfig {
                seed,
                vehicles: 20,
                ..SimConfig::default()
            }
            .with_pipeline(p);
            let run = || {
                let mut log = Vec::new();
                let report = simulate(&cfg, Some(&mut log)).map(|r| r.report.to_json());
                (log, report.map_err(|e| e.to_string()))
            };
            let (log_a, rep_a) = run();
            let (log_b, rep_b) = run();
            check(log_a == log_b, format!("{p} seed {seed}: event logs differ"))?;
            check(rep_a == rep_b, format!("{p} seed {seed}: reports differ"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} (pipeline, seed) pairs byte-identical"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("mcc worked example", mcc_worked_example),
        ("swap repair", lemma1_repair),
        ("assignment optimality", assignment_optimality),
        ("stage-1 global optimality", stage1_global_optimality),
        ("conflict detection", conflict_detection),
        ("reachability threshold", reachability_threshold),
        ("controller convergence", controller_convergence),
        ("poisson sampler", poisson_sampler),
        ("end-to-end direction", end_to_end),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

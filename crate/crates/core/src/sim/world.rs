//! Fixed-step world: spawning, lane changing, crossing policies, control and
//! the collision monitor.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::assignment::Target;
use crate::conflictgraph::{reachability_conflict, ReachabilityParams};
use crate::control::{euler_step, stage1_accel, stage2_accel, PlatoonMember};
use crate::geometry::{ConflictKind, LaneRef, Leg, Movement, RcsGrid, RcsPoint, VehicleState, LANES_PER_LEG};
use crate::pathplan::{plan_optimal, CbsConfig, PlanInstance};
use crate::scheduler::{same_lane_precedences, schedule, LanePosition};

use super::arrivals::{generate_arrivals, Arrival};
use super::config::{ConfigError, LaneChangeMode, Pipeline, SchedulerKind, SimConfig};
use super::eventlog::{LogRecord, Zone, LOG_HEADER};
use super::metrics::{metrics, CrossingRecord, MetricsReport, RunStatus};
use super::signal::SignalPlan;

/// Extra time budgeted per m/s of speed deficit when picking the earliest
/// crossing slot, s^2/m.
const ACCEL_SLACK: f64 = 0.5;
/// Distance kept between a vehicle held at a line and the line itself, m.
const HOLD_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionKind {
    SameLane,
    Junction,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("collision ({kind:?}) at t = {t:.1} s between vehicles {a} and {b}: {detail}")]
    Collision {
        t: f64,
        a: u32,
        b: u32,
        kind: CollisionKind,
        detail: String,
    },
    #[error("event log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
struct LaneChange {
    to: u8,
    end: u64,
}

#[derive(Debug, Clone)]
struct Vehicle {
    id: u32,
    leg: Leg,
    movement: Movement,
    target_lane: u8,
    lane: u8,
    change: Option<LaneChange>,
    /// Planned lane changes as (start step, new lane).
    planned: VecDeque<(u64, u8)>,
    x: f64,
    v: f64,
    u: f64,
    t_in: u64,
    t_out: Option<u64>,
    column: u64,
    cfz_rank: Option<u32>,
    slot: Option<u32>,
    parent: Option<u32>,
    /// Position at which the vehicle has left the junction box.
    clear_at: f64,
}

impl Vehicle {
    fn occupies(&self, lane: u8) -> bool {
        self.lane == lane || self.change.is_some_and(|c| c.to == lane)
    }

    fn shares_lane(&self, other: &Vehicle) -> bool {
        self.leg == other.leg && (other.occupies(self.lane) || self.change.is_some_and(|c| other.occupies(c.to)))
    }

    fn lane_ready(&self) -> bool {
        self.change.is_none() && self.lane == self.target_lane
    }

    fn lane_ref(&self) -> LaneRef {
        LaneRef {
            leg: self.leg,
            index: self.lane,
        }
    }
}

#[derive(Debug, Clone)]
struct Group {
    members: Vec<u32>,
    opened: u64,
}

/// Outcome of one vehicle, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleSummary {
    pub id: u32,
    pub movement: Movement,
    pub t_in: f64,
    pub t_out: Option<f64>,
    /// Crossing slot held when the vehicle reached the stop line.
    pub slot: Option<u32>,
    pub cfz_rank: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: MetricsReport,
    /// Every generated vehicle, spawned or not, by id.
    pub vehicles: Vec<VehicleSummary>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Counters {
    groups_planned: usize,
    lane_changes: usize,
    schedules: usize,
    max_cover: usize,
}

pub struct World<'a> {
    cfg: SimConfig,
    reach: ReachabilityParams,
    signal: SignalPlan,
    /// Crossing or converging conflict between movement indices.
    conflicts: [[bool; 12]; 12],
    pending: [VecDeque<Arrival>; 4],
    arrivals: Vec<Arrival>,
    step: u64,
    vehicles: BTreeMap<u32, Vehicle>,
    finished: BTreeMap<u32, VehicleSummary>,
    groups: [Option<Group>; 4],
    cfz_count: u32,
    last_active: u64,
    counters: Counters,
    log: Option<&'a mut dyn Write>,
}

fn movement_index(m: Movement) -> usize {
    m.leg.index() * 3 + m.turn as usize
}

impl<'a> World<'a> {
    pub fn new(cfg: SimConfig, arrivals: Vec<Arrival>) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut conflicts = [[false; 12]; 12];
        for a in Movement::all() {
            for b in Movement::all() {
                if a.leg != b.leg {
                    conflicts[movement_index(a)][movement_index(b)] = matches!(
                        cfg.intersection.movement_conflict(a, b, false),
                        Some(ConflictKind::Crossing | ConflictKind::Converging)
                    );
                }
            }
        }
        let mut pending: [VecDeque<Arrival>; 4] = Default::default();
        for a in &arrivals {
            pending[a.leg.index()].push_back(*a);
        }
        Ok(Self {
            reach: cfg.reachability(),
            signal: cfg.signal.into(),
            cfg,
            conflicts,
            pending,
            arrivals,
            step: 0,
            vehicles: BTreeMap::new(),
            finished: BTreeMap::new(),
            groups: Default::default(),
            cfz_count: 0,
            last_active: 0,
            counters: Counters::default(),
            log: None,
        })
    }

    /// World fed by the seeded arrival stream of `cfg`.
    pub fn from_config(cfg: SimConfig) -> Result<Self, SimError> {
        let arrivals = generate_arrivals(&cfg, cfg.seed)?;
        Self::new(cfg, arrivals)
    }

    /// Streams one CSV record per vehicle and step into `out`.
    pub fn with_log(mut self, out: &'a mut dyn Write) -> Result<Self, SimError> {
        writeln!(out, "{LOG_HEADER}")?;
        self.log = Some(out);
        Ok(self)
    }

    pub fn clock(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_finished(&self) -> bool {
        self.vehicles.is_empty() && self.pending.iter().all(VecDeque::is_empty)
    }

    fn pipeline(&self) -> Pipeline {
        self.cfg.pipeline()
    }

    fn conflicting(&self, a: Movement, b: Movement) -> bool {
        self.conflicts[movement_index(a)][movement_index(b)]
    }

    fn zone_of(&self, x: f64) -> Zone {
        let spec = &self.cfg.intersection;
        if x < spec.lcz_length {
            Zone::LaneChange
        } else if x < spec.ctrl_length() {
            Zone::CarFollow
        } else {
            Zone::Junction
        }
    }

    fn column_steps(&self) -> u64 {
        self.cfg.steps(self.cfg.controller.headway()).max(1)
    }

    fn headway(&self) -> f64 {
        self.cfg.controller.headway()
    }

    /// Highest speed from which a vehicle `room` metres short of its minimum
    /// gap can still match a predecessor driving at `v_lead`.
    fn safe_speed(&self, room: f64, v_lead: f64) -> f64 {
        let b = self.cfg.safety.comfort_decel;
        let big_b = -self.cfg.limits.u_min;
        (2.0 * b * room + b / big_b * v_lead * v_lead).max(0.0).sqrt()
    }

    fn stop_speed(&self, room: f64) -> f64 {
        (2.0 * self.cfg.safety.comfort_decel * room.max(0.0)).sqrt()
    }

    /// Advances the world by one step.
    pub fn step(&mut self) -> Result<(), SimError> {
        let mut active = self.spawn();
        self.plan_groups();
        active |= self.execute_lane_changes();
        let t = self.time();
        let controls: Vec<(u32, f64)> = self.vehicles.values().map(|v| (v.id, self.control(v, t))).collect();

        let spec = self.cfg.intersection.clone();
        let limits = self.cfg.limits;
        let dt = self.cfg.dt;
        let mut entered = Vec::new();
        let mut motion = 0.0;
        for (id, u) in controls {
            let v = self.vehicles.get_mut(&id).expect("vehicle present");
            let (dx, nv) = euler_step(v.v, u, dt, &limits);
            let before = v.x;
            v.x += dx;
            v.v = nv;
            v.u = u;
            motion += dx;
            if before < spec.lcz_length && v.x >= spec.lcz_length {
                entered.push(id);
            }
            if before < spec.ctrl_length() && v.x >= spec.ctrl_length() {
                v.t_out = Some(self.step + 1);
            }
        }
        self.step += 1;
        for id in entered {
            self.on_cfz_entry(id);
        }
        if motion > 1e-9 || active || self.vehicles.is_empty() {
            self.last_active = self.step;
        }
        self.write_log()?;
        self.monitor()?;
        self.remove_cleared();
        Ok(())
    }

    fn spawn(&mut self) -> bool {
        let mut spawned = false;
        let col_steps = self.column_steps();
        for leg in Leg::ALL {
            let Some(a) = self.pending[leg.index()].front().copied() else {
                continue;
            };
            if a.step > self.step {
                continue;
            }
            let (v0, any_lane) = match self.cfg.lane_change {
                LaneChangeMode::Fclc => {
                    if self.step % col_steps != 0 {
                        continue;
                    }
                    (self.cfg.controller.v_p, true)
                }
                LaneChangeMode::Greedy => (self.cfg.limits.v_max, false),
            };
            if !self.entry_clear(leg, a.lane, v0, any_lane) {
                continue;
            }
            self.pending[leg.index()].pop_front();
            let spec = &self.cfg.intersection;
            let clear_at = spec.ctrl_length() + spec.junction_path(a.movement).length + self.cfg.safety.vehicle_length;
            let vehicle = Vehicle {
                id: a.id,
                leg,
                movement: a.movement,
                target_lane: spec.lane_of(a.movement.turn),
                lane: a.lane,
                change: None,
                planned: VecDeque::new(),
                x: 0.0,
                v: v0,
                u: 0.0,
                t_in: self.step,
                t_out: None,
                column: self.step / col_steps,
                cfz_rank: None,
                slot: None,
                parent: None,
                clear_at,
            };
            self.vehicles.insert(a.id, vehicle);
            spawned = true;
            if self.cfg.lane_change == LaneChangeMode::Fclc {
                let g = self.groups[leg.index()].get_or_insert_with(|| Group {
                    members: Vec::new(),
                    opened: self.step,
                });
                g.members.push(a.id);
            }
        }
        spawned
    }

    /// Whether a vehicle can appear at the entry of `lane` at speed `v0`.
    fn entry_clear(&self, leg: Leg, lane: u8, v0: f64, any_lane: bool) -> bool {
        let lcz = self.cfg.intersection.lcz_length;
        let d_f = self.cfg.controller.d_f;
        self.vehicles.values().filter(|o| o.leg == leg).all(|o| {
            let relevant = o.occupies(lane) || (any_lane && o.x < lcz);
            !relevant || (o.x >= d_f - 0.5 && self.safe_speed(o.x - self.cfg.safety.min_gap, o.v) >= v0)
        })
    }

    fn plan_groups(&mut self) {
        if self.cfg.lane_change != LaneChangeMode::Fclc {
            return;
        }
        let timeout = self.cfg.steps(self.cfg.rcs.group_timeout);
        for leg in Leg::ALL {
            let due = self.groups[leg.index()]
                .as_ref()
                .is_some_and(|g| g.members.len() >= self.cfg.rcs.group_size || self.step >= g.opened + timeout);
            if due {
                let g = self.groups[leg.index()].take().expect("group present");
                self.plan_group(&g.members);
            }
        }
    }

    /// Plans one group on a grid whose columns are the members' entry
    /// columns and whose rows are the approach lanes.
    fn plan_group(&mut self, members: &[u32]) {
        self.counters.groups_planned += 1;
        let step_steps = self.cfg.steps(self.cfg.rcs.step_time).max(1);
        let vs: Vec<&Vehicle> = members.iter().map(|id| &self.vehicles[id]).collect();
        let c_max = vs.iter().map(|v| v.column).max().expect("non-empty group");
        let c_min = vs.iter().map(|v| v.column).min().expect("non-empty group");
        let grid = RcsGrid::new(
            LANES_PER_LEG as u32,
            (c_max - c_min + 1) as u32,
            self.cfg.controller.d_f,
            self.cfg.intersection.lane_width,
            0.0,
        );
        let starts: Vec<RcsPoint> = vs
            .iter()
            .map(|v| RcsPoint::new((c_max - v.column) as u32, u32::from(v.lane)))
            .collect();
        let movements: Vec<Movement> = vs.iter().map(|v| v.movement).collect();
        let targets: Vec<Target> = vs
            .iter()
            .zip(&starts)
            .map(|(v, s)| Target {
                cell: RcsPoint::new(s.x, u32::from(v.target_lane)),
                movement: v.movement,
            })
            .collect();
        let lanes: Vec<Vec<u8>> = match PlanInstance::new(grid, starts, movements, targets)
            .and_then(|inst| plan_optimal(&inst, &CbsConfig::default()))
        {
            Ok(res) => res
                .paths
                .paths
                .iter()
                .map(|p| p.cells.iter().map(|c| c.y as u8).collect())
                .collect(),
            // Members sit in distinct columns, so direct lateral moves are
            // always conflict-free.
            Err(_) => vs
                .iter()
                .map(|v| {
                    let mut seq = vec![v.lane];
                    let mut l = v.lane;
                    while l != v.target_lane {
                        l = if l < v.target_lane { l + 1 } else { l - 1 };
                        seq.push(l);
                    }
                    seq
                })
                .collect(),
        };
        let now = self.step;
        for (id, seq) in members.iter().zip(lanes) {
            let v = self.vehicles.get_mut(id).expect("member present");
            for (k, w) in seq.windows(2).enumerate() {
                if w[0] != w[1] {
                    v.planned.push_back((now + k as u64 * step_steps, w[1]));
                }
            }
        }
    }

    fn start_change(&mut self, id: u32, to: u8) {
        let end = self.step + self.cfg.steps(self.cfg.rcs.lane_change_time).max(1);
        let v = self.vehicles.get_mut(&id).expect("vehicle present");
        debug_assert_eq!(v.lane.abs_diff(to), 1);
        v.change = Some(LaneChange { to, end });
        self.counters.lane_changes += 1;
    }

    fn execute_lane_changes(&mut self) -> bool {
        let mut active = false;
        let ids: Vec<u32> = self.vehicles.keys().copied().collect();
        for &id in &ids {
            let v = self.vehicles.get_mut(&id).expect("vehicle present");
            if let Some(c) = v.change {
                if self.step >= c.end {
                    v.lane = c.to;
                    v.change = None;
                    active = true;
                }
            }
        }
        let lcz = self.cfg.intersection.lcz_length;
        for id in ids {
            let v = &self.vehicles[&id];
            if v.change.is_some() || v.x >= lcz {
                continue;
            }
            match self.cfg.lane_change {
                LaneChangeMode::Fclc => {
                    if let Some(&(start, to)) = v.planned.front() {
                        if start <= self.step && self.lane_clear(v, to) {
                            self.vehicles.get_mut(&id).expect("vehicle present").planned.pop_front();
                            self.start_change(id, to);
                            active = true;
                        }
                    }
                }
                LaneChangeMode::Greedy => {
                    if v.lane != v.target_lane {
                        let to = if v.lane < v.target_lane { v.lane + 1 } else { v.lane - 1 };
                        if self.gap_accepted(v, to) {
                            self.start_change(id, to);
                            active = true;
                        }
                    }
                }
            }
        }
        active
    }

    /// Whether moving into `to` keeps the minimum gap and a safe speed to
    /// both neighbours there. Planned changes wait for this.
    fn lane_clear(&self, me: &Vehicle, to: u8) -> bool {
        let min_gap = self.cfg.safety.min_gap;
        self.vehicles
            .values()
            .filter(|o| o.id != me.id && o.leg == me.leg && o.occupies(to))
            .all(|o| {
                let (gap, v_follow, v_lead) = if o.x >= me.x {
                    (o.x - me.x, me.v, o.v)
                } else {
                    (me.x - o.x, o.v, me.v)
                };
                gap >= min_gap && self.safe_speed(gap - min_gap, v_lead) >= v_follow
            })
    }

    /// Gap acceptance of the greedy lane changer: both neighbours in the
    /// target lane at least a car-following distance away and safe to follow.
    fn gap_accepted(&self, me: &Vehicle, to: u8) -> bool {
        let d_f = self.cfg.controller.d_f;
        let min_gap = self.cfg.safety.min_gap;
        self.vehicles
            .values()
            .filter(|o| o.id != me.id && o.leg == me.leg && o.occupies(to))
            .all(|o| {
                if o.x >= me.x {
                    let gap = o.x - me.x;
                    gap > d_f && self.safe_speed(gap - min_gap, o.v) >= me.v
                } else {
                    let gap = me.x - o.x;
                    gap > d_f && self.safe_speed(gap - min_gap, me.v) >= o.v
                }
            })
    }

    /// Vehicles ahead that `me` must stay safe behind: same lane in any zone
    /// and, for group lane changing, any lane while both are still changing
    /// lanes.
    fn leaders<'s>(&'s self, me: &'s Vehicle) -> impl Iterator<Item = &'s Vehicle> + 's {
        let lcz = self.cfg.intersection.lcz_length;
        let column_order = self.cfg.lane_change == LaneChangeMode::Fclc && me.x < lcz;
        self.vehicles
            .values()
            .filter(move |o| o.id != me.id && o.leg == me.leg)
            .filter(move |o| o.x > me.x || (o.x == me.x && o.id < me.id))
            .filter(move |o| me.shares_lane(o) || (column_order && o.x < lcz))
    }

    fn predecessor<'s>(&'s self, me: &'s Vehicle) -> Option<&'s Vehicle> {
        self.leaders(me).min_by(|a, b| a.x.total_cmp(&b.x))
    }

    /// Whether an earlier-slot vehicle with a conflicting route has not yet
    /// left the junction.
    fn blocked(&self, me: &Vehicle) -> bool {
        let Some(slot) = me.slot else {
            return false;
        };
        self.vehicles.values().any(|o| {
            o.id != me.id && o.slot.is_some_and(|s| s < slot) && self.conflicting(me.movement, o.movement)
        })
    }

    fn must_hold_at_line(&self, me: &Vehicle, t: f64) -> bool {
        match self.cfg.scheduler {
            SchedulerKind::ConstantTl => !self.signal.is_green(me.movement, t),
            SchedulerKind::Mcc | SchedulerKind::Fifo => me.slot.is_none() || self.blocked(me),
        }
    }

    /// A vehicle that can no longer stop before the line keeps going.
    fn committed(&self, me: &Vehicle) -> bool {
        let room = self.cfg.intersection.ctrl_length() - me.x;
        room < me.v * me.v / (2.0 * -self.cfg.limits.u_min) + me.v * self.cfg.dt + 0.5
    }

    fn cruise_speed(&self) -> f64 {
        match self.cfg.lane_change {
            LaneChangeMode::Fclc => self.cfg.controller.v_p,
            LaneChangeMode::Greedy => self.cfg.limits.v_max,
        }
    }

    fn follow_term(&self, gap: f64, v_lead: f64, v: f64) -> f64 {
        let g = &self.cfg.controller;
        g.k_p * (gap - g.d_f) + g.k_v * (v_lead - v)
    }

    fn control(&self, me: &Vehicle, t: f64) -> f64 {
        let g = &self.cfg.controller;
        let limits = &self.cfg.limits;
        let spec = &self.cfg.intersection;
        let stop = spec.ctrl_length();
        let zone = self.zone_of(me.x);
        let cruise = -g.k_v * (me.v - self.cruise_speed());
        let pred = self.predecessor(me);
        let mut u = match zone {
            Zone::LaneChange => match self.cfg.lane_change {
                LaneChangeMode::Fclc => {
                    let t_col = (me.column * self.column_steps()) as f64 * self.cfg.dt;
                    stage1_accel(me.x, me.v, (t - t_col) * g.v_p, g, limits)
                }
                LaneChangeMode::Greedy => cruise,
            },
            Zone::CarFollow => match (self.cfg.scheduler, me.slot) {
                (SchedulerKind::Mcc | SchedulerKind::Fifo, Some(slot)) => {
                    let i = PlatoonMember {
                        p: stop - me.x,
                        v: me.v,
                        depth: slot,
                    };
                    let mut sources = vec![PlatoonMember {
                        p: -g.v_p * t,
                        v: g.v_p,
                        depth: 0,
                    }];
                    if let Some(p) = me.parent.and_then(|id| self.vehicles.get(&id)) {
                        sources.push(PlatoonMember {
                            p: stop - p.x,
                            v: p.v,
                            depth: p.slot.expect("parents hold a slot"),
                        });
                    }
                    stage2_accel(&i, &sources, g, limits)
                }
                _ => cruise,
            },
            Zone::Junction => cruise,
        };
        let platoon = zone == Zone::CarFollow && me.slot.is_some();
        if let Some(p) = pred {
            if !platoon && !(zone == Zone::LaneChange && self.cfg.lane_change == LaneChangeMode::Fclc) {
                u = u.min(self.follow_term(p.x - me.x, p.v, me.v));
            }
        }

        let cap = self
            .leaders(me)
            .map(|p| self.safe_speed(p.x - me.x - self.cfg.safety.min_gap, p.v))
            .fold(limits.v_max, f64::min);
        let mut cap = cap;
        if zone == Zone::LaneChange && !me.lane_ready() {
            cap = cap.min(self.stop_speed(spec.lcz_length - HOLD_MARGIN - me.x));
        }
        if zone != Zone::Junction && self.must_hold_at_line(me, t) && !self.committed(me) {
            let room = stop - HOLD_MARGIN - me.x;
            if zone == Zone::CarFollow && self.cfg.scheduler == SchedulerKind::ConstantTl {
                u = u.min(self.follow_term(room + g.d_f, 0.0, me.v));
            }
            cap = cap.min(self.stop_speed(room));
        }
        u = u.min((cap - me.v) / self.cfg.dt);
        limits.saturate(u)
    }

    fn earliest_slot(&self, v: &Vehicle, t: f64) -> u32 {
        let g = &self.cfg.controller;
        let remaining = self.cfg.intersection.ctrl_length() - v.x;
        let need = t + remaining / g.v_p + ACCEL_SLACK * (g.v_p - v.v).max(0.0);
        ((need / self.headway()) - 1e-9).ceil().max(1.0) as u32
    }

    fn on_cfz_entry(&mut self, id: u32) {
        self.cfz_count += 1;
        let rank = self.cfz_count;
        self.vehicles.get_mut(&id).expect("vehicle present").cfz_rank = Some(rank);
        match self.cfg.scheduler {
            SchedulerKind::Mcc => self.reschedule(),
            SchedulerKind::Fifo => self.fifo_slot(id),
            SchedulerKind::ConstantTl => {}
        }
    }

    /// Re-plans every vehicle that can still be reordered; vehicles too
    /// close to the line keep their slots.
    fn reschedule(&mut self) {
        let stop = self.cfg.intersection.ctrl_length();
        let r = self.reach;
        let t = self.time();
        let h = self.headway();
        // Frozen once either the vehicle or its slot reference is too close
        // to the line for a newcomer to cross alongside it.
        let in_cfz: Vec<&Vehicle> = self.vehicles.values().filter(|v| v.cfz_rank.is_some() && v.x < stop).collect();
        let mut frozen: BTreeSet<u32> = in_cfz
            .iter()
            .filter(|v| {
                let reference = v.slot.map_or(f64::INFINITY, |s| r.v_p * (f64::from(s) * h - t));
                let l_prec = (stop - v.x).min(reference);
                reachability_conflict(l_prec, r.v_p, r.cfz_length, r.v_max, r.u_max)
            })
            .map(|v| v.id)
            .collect();
        // Everything ahead of a frozen vehicle in its lane is frozen too, so
        // slot order never contradicts lane order.
        for v in &in_cfz {
            let ahead_of_frozen = in_cfz
                .iter()
                .any(|z| frozen.contains(&z.id) && z.lane_ref() == v.lane_ref() && z.x < v.x);
            if ahead_of_frozen {
                frozen.insert(v.id);
            }
        }
        let mut flexible: Vec<&Vehicle> = in_cfz.into_iter().filter(|v| !frozen.contains(&v.id)).collect();
        flexible.sort_by_key(|v| v.cfz_rank);
        let flex_ids: Vec<u32> = flexible.iter().map(|v| v.id).collect();
        // Fixed slots only bind the flexible vehicles they interact with.
        let fixed: Vec<&Vehicle> = self
            .vehicles
            .values()
            .filter(|v| v.slot.is_some() && !flex_ids.contains(&v.id))
            .collect();
        let floor: Vec<u32> = flexible
            .iter()
            .map(|v| {
                fixed
                    .iter()
                    .filter(|o| o.lane_ref() == v.lane_ref() || self.conflicting(v.movement, o.movement))
                    .filter_map(|o| o.slot)
                    .max()
                    .map_or(0, |s| s + 1)
            })
            .collect();
        let states: Vec<VehicleState> = flexible
            .iter()
            .map(|v| VehicleState {
                id: v.id,
                position: v.x,
                velocity: v.v,
                accel: v.u,
                lane: v.lane_ref(),
                movement: v.movement,
                t_in: Some(v.t_in),
                t_out: None,
            })
            .collect();
        // A held slot stays reachable: the vehicle is already tracking it.
        let earliest: Vec<u32> = flexible
            .iter()
            .map(|v| {
                let e = self.earliest_slot(v, t);
                v.slot.map_or(e, |s| s.min(e))
            })
            .zip(&floor)
            .map(|(e, &f)| e.max(f))
            .collect();
        let sch = schedule(&self.cfg.intersection, &self.reach, &states);
        self.counters.schedules += 1;
        self.counters.max_cover = self.counters.max_cover.max(sch.cover.k());

        let lanes: Vec<LanePosition> = states
            .iter()
            .enumerate()
            .map(|(k, v)| LanePosition {
                vehicle: k as u32 + 1,
                lane: v.lane,
                distance_to_stop: stop - v.position,
            })
            .collect();
        let mut prec: Vec<(u32, u32)> = sch.cdg.unidirectional().iter().copied().collect();
        prec.extend(same_lane_precedences(&lanes));
        let need = |layer: &Vec<u32>| layer.iter().map(|&rank| earliest[rank as usize - 1]).max().unwrap_or(0);
        let layers = release_order(&sch.tree.layers, &prec, need);

        // Each candidate order is compacted: a vehicle takes the first slot
        // after every earlier vehicle it interacts with.
        let place = |order: &[usize]| {
            let mut placed: Vec<(&Vehicle, u32)> = fixed.iter().map(|v| (*v, v.slot.expect("fixed slot"))).collect();
            let mut out = Vec::with_capacity(order.len());
            for &k in order {
                let me = flexible[k];
                let before = placed
                    .iter()
                    .filter(|(o, _)| o.lane_ref() == me.lane_ref() || self.conflicting(me.movement, o.movement))
                    .max_by_key(|(o, s)| (*s, o.id));
                let slot = before.map_or(0, |&(_, s)| s + 1).max(earliest[k]).max(1);
                out.push((me.id, slot, before.map(|(o, _)| o.id)));
                placed.push((me, slot));
            }
            out
        };
        let mut by_layer = Vec::with_capacity(flexible.len());
        for layer in &layers {
            let mut members: Vec<usize> = layer.iter().map(|&rank| rank as usize - 1).collect();
            members.sort_by(|&a, &b| flexible[b].x.total_cmp(&flexible[a].x));
            by_layer.extend(members);
        }
        // Incumbent order with newcomers appended.
        let mut kept: Vec<usize> = (0..flexible.len()).collect();
        kept.sort_by(|&a, &b| {
            let key = |k: usize| flexible[k].slot.unwrap_or(u32::MAX);
            key(a).cmp(&key(b)).then(flexible[b].x.total_cmp(&flexible[a].x))
        });
        let score = |u: &[(u32, u32, Option<u32>)]| {
            let total: u64 = u.iter().map(|&(_, s, _)| u64::from(s)).sum();
            (total, u.iter().map(|&(_, s, _)| s).max())
        };
        let solved = place(&by_layer);
        let inserted = place(&kept);
        let updates = if score(&solved) <= score(&inserted) { solved } else { inserted };
        for (id, slot, parent) in updates {
            let v = self.vehicles.get_mut(&id).expect("vehicle present");
            v.slot = Some(slot);
            v.parent = parent;
        }
    }

    fn fifo_slot(&mut self, id: u32) {
        let t = self.time();
        let last = self.vehicles.values().filter(|v| v.id != id && v.slot.is_some()).max_by_key(|v| v.slot);
        let base = last.and_then(|v| v.slot).unwrap_or(0);
        let parent = last.map(|v| v.id);
        let slot = (base + 1).max(self.earliest_slot(&self.vehicles[&id], t));
        let v = self.vehicles.get_mut(&id).expect("vehicle present");
        v.slot = Some(slot);
        v.parent = parent;
        self.counters.schedules += 1;
        self.counters.max_cover = self.counters.max_cover.max(1);
    }

    fn write_log(&mut self) -> Result<(), SimError> {
        let Some(out) = self.log.as_deref_mut() else {
            return Ok(());
        };
        let spec = &self.cfg.intersection;
        for v in self.vehicles.values() {
            let zone = if v.x < spec.lcz_length {
                Zone::LaneChange
            } else if v.x < spec.ctrl_length() {
                Zone::CarFollow
            } else {
                Zone::Junction
            };
            LogRecord {
                id: v.id,
                step: self.step,
                lane: v.lane_ref(),
                p: v.x,
                v: v.v,
                u: v.u,
                zone,
            }
            .write_csv(self.cfg.dt, out)?;
        }
        Ok(())
    }

    fn monitor(&self) -> Result<(), SimError> {
        let stop = self.cfg.intersection.ctrl_length();
        let gap = self.cfg.collision_gap();
        let vs: Vec<&Vehicle> = self.vehicles.values().collect();
        for (k, a) in vs.iter().enumerate() {
            for b in &vs[k + 1..] {
                if a.shares_lane(b) && (a.x - b.x).abs() < gap {
                    return Err(self.collision(a, b, CollisionKind::SameLane));
                }
                let inside = |v: &Vehicle| v.x >= stop && v.x < v.clear_at;
                if inside(a) && inside(b) && self.conflicting(a.movement, b.movement) {
                    return Err(self.collision(a, b, CollisionKind::Junction));
                }
            }
        }
        Ok(())
    }

    fn collision(&self, a: &Vehicle, b: &Vehicle, kind: CollisionKind) -> SimError {
        SimError::Collision {
            t: self.time(),
            a: a.id,
            b: b.id,
            kind,
            detail: format!(
                "{} {} at {:.2} m {:.2} m/s (slot {:?}) vs {} {} at {:.2} m {:.2} m/s (slot {:?})",
                a.movement,
                a.lane_ref(),
                a.x,
                a.v,
                a.slot,
                b.movement,
                b.lane_ref(),
                b.x,
                b.v,
                b.slot
            ),
        }
    }

    fn remove_cleared(&mut self) {
        let dt = self.cfg.dt;
        let gone: Vec<u32> = self.vehicles.values().filter(|v| v.x >= v.clear_at).map(|v| v.id).collect();
        for id in gone {
            let v = self.vehicles.remove(&id).expect("vehicle present");
            self.finished.insert(id, summary(&v, dt));
        }
    }

    fn stalled(&self) -> bool {
        !self.vehicles.is_empty() && (self.step - self.last_active) as f64 * self.cfg.dt >= self.cfg.stall_time
    }

    /// Runs until every vehicle has left the junction, the world stalls, or
    /// the time limit passes.
    pub fn run(mut self) -> Result<RunResult, SimError> {
        let status = loop {
            if self.is_finished() {
                break RunStatus::Completed;
            }
            if self.stalled() {
                break RunStatus::Deadlock;
            }
            if self.time() >= self.cfg.max_time {
                break RunStatus::Timeout;
            }
            self.step()?;
        };
        if let Some(out) = self.log.as_deref_mut() {
            out.flush()?;
        }
        Ok(self.finish(status))
    }

    fn finish(self, status: RunStatus) -> RunResult {
        let dt = self.cfg.dt;
        let mut all = self.finished.clone();
        for v in self.vehicles.values() {
            all.insert(v.id, summary(v, dt));
        }
        for a in &self.arrivals {
            all.entry(a.id).or_insert(VehicleSummary {
                id: a.id,
                movement: a.movement,
                t_in: f64::NAN,
                t_out: None,
                slot: None,
                cfz_rank: None,
            });
        }
        let vehicles: Vec<VehicleSummary> = all.into_values().collect();
        let crossed = vehicles.iter().filter(|v| v.t_out.is_some()).count();
        let m = if status == RunStatus::Completed {
            let records: Vec<CrossingRecord> = vehicles
                .iter()
                .map(|v| CrossingRecord {
                    id: v.id,
                    t_in: v.t_in,
                    t_out: v.t_out,
                })
                .collect();
            metrics(&records, self.cfg.intersection.ctrl_length(), self.cfg.limits.v_max).ok()
        } else {
            None
        };
        let report = MetricsReport {
            pipeline: self.pipeline(),
            seed: self.cfg.seed,
            vehicles: self.arrivals.len(),
            volume: self.cfg.volume,
            status,
            crossed,
            t_evc: m.map(|m| m.t_evc),
            t_attd: m.map(|m| m.t_attd),
            collisions: 0,
            sim_time: self.time(),
            groups_planned: self.counters.groups_planned,
            lane_changes: self.counters.lane_changes,
            schedules: self.counters.schedules,
            max_cover: self.counters.max_cover,
        };
        RunResult { report, vehicles }
    }
}

/// Reorders tree layers so that each next layer is the one ready earliest
/// among those whose predecessors have all been placed. Layer contents are
/// untouched, so cliques and precedence are preserved.
fn release_order(layers: &[Vec<u32>], prec: &[(u32, u32)], need: impl Fn(&Vec<u32>) -> u32) -> Vec<Vec<u32>> {
    let layer_of: BTreeMap<u32, usize> = layers
        .iter()
        .enumerate()
        .flat_map(|(k, l)| l.iter().map(move |&v| (v, k)))
        .collect();
    let mut blockers = vec![0usize; layers.len()];
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); layers.len()];
    for &(a, b) in prec {
        let (la, lb) = (layer_of[&a], layer_of[&b]);
        if la != lb && !edges[la].contains(&lb) {
            edges[la].push(lb);
            blockers[lb] += 1;
        }
    }
    let mut placed = vec![false; layers.len()];
    let mut out = Vec::with_capacity(layers.len());
    for _ in 0..layers.len() {
        let next = (0..layers.len())
            .filter(|&k| !placed[k] && blockers[k] == 0)
            .min_by_key(|&k| (need(&layers[k]), k))
            .expect("tree layers respect precedence");
        placed[next] = true;
        for &m in &edges[next] {
            blockers[m] -= 1;
        }
        out.push(layers[next].clone());
    }
    out
}

fn summary(v: &Vehicle, dt: f64) -> VehicleSummary {
    VehicleSummary {
        id: v.id,
        movement: v.movement,
        t_in: v.t_in as f64 * dt,
        t_out: v.t_out.map(|s| s as f64 * dt),
        slot: v.slot,
        cfz_rank: v.cfz_rank,
    }
}

/// Runs the seeded scenario of `cfg`, optionally streaming the event log.
pub fn simulate(cfg: &SimConfig, log: Option<&mut dyn Write>) -> Result<RunResult, SimError> {
    let world = World::from_config(cfg.clone())?;
    match log {
        Some(out) => world.with_log(out)?.run(),
        None => world.run(),
    }
}

/// The seeded scenario of `cfg` under the fixed-time signal.
pub fn run_constant_spat(cfg: &SimConfig) -> Result<MetricsReport, SimError> {
    let mut cfg = cfg.clone();
    cfg.scheduler = SchedulerKind::ConstantTl;
    Ok(simulate(&cfg, None)?.report)
}

//! Four-leg intersection layout, movements, junction paths and the relative
//! coordinate grid used for lane-change planning.
//!
//! World frame: the junction box is centred on the origin, traffic keeps
//! right, and legs are numbered counter-clockwise starting from the south
//! approach. Lane 0 of every approach is the lane next to the median.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of approach lanes on every leg.
pub const LANES_PER_LEG: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("position ({longitudinal:.3}, {lateral:.3}) lies outside the lane-changing zone")]
    OutOfZone { longitudinal: f64, lateral: f64 },
    #[error("invalid intersection: {0}")]
    InvalidSpec(String),
}

/// Approach direction, named after the side of the junction the vehicle
/// comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leg {
    South,
    East,
    North,
    West,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::South, Leg::East, Leg::North, Leg::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Leg {
        Leg::ALL[i % 4]
    }

    /// Leg reached after `quarter_turns` counter-clockwise quarter turns.
    pub fn rotate(self, quarter_turns: usize) -> Leg {
        Leg::from_index(self.index() + quarter_turns)
    }

    pub fn letter(self) -> char {
        match self {
            Leg::South => 'S',
            Leg::East => 'E',
            Leg::North => 'N',
            Leg::West => 'W',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Left,
    Straight,
    Right,
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Left, Turn::Straight, Turn::Right];

    /// Quarter turns (counter-clockwise) from the approach leg to the exit leg.
    fn exit_offset(self) -> usize {
        match self {
            Turn::Right => 1,
            Turn::Straight => 2,
            Turn::Left => 3,
        }
    }
}

impl fmt::Display for Turn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Turn::Left => "left",
            Turn::Straight => "straight",
            Turn::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Movement {
    pub leg: Leg,
    pub turn: Turn,
}

impl Movement {
    pub const fn new(leg: Leg, turn: Turn) -> Self {
        Self { leg, turn }
    }

    /// The twelve movements of the four-leg layout.
    pub fn all() -> Vec<Movement> {
        Leg::ALL
            .iter()
            .flat_map(|&leg| Turn::ALL.iter().map(move |&turn| Movement { leg, turn }))
            .collect()
    }

    pub fn exit_leg(self) -> Leg {
        self.leg.rotate(self.turn.exit_offset())
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.leg.letter(), self.turn)
    }
}

/// One approach lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LaneRef {
    pub leg: Leg,
    pub index: u8,
}

impl fmt::Display for LaneRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.leg.letter(), self.index)
    }
}

/// Route conflicts between two movements inside the junction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictKind {
    Crossing,
    Diverging,
    Converging,
}

/// Declarative description of the intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionSpec {
    /// Movement served by each approach lane, innermost lane first.
    #[serde(default = "default_lane_movements")]
    pub lane_movements: [Turn; LANES_PER_LEG],
    /// Length of the lane-changing zone, metres.
    #[serde(default = "default_zone_length")]
    pub lcz_length: f64,
    /// Length of the car-following zone, metres.
    #[serde(default = "default_zone_length")]
    pub cfz_length: f64,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
}

fn default_lane_movements() -> [Turn; LANES_PER_LEG] {
    [Turn::Left, Turn::Straight, Turn::Right]
}

fn default_zone_length() -> f64 {
    500.0
}

fn default_lane_width() -> f64 {
    3.5
}

impl Default for IntersectionSpec {
    fn default() -> Self {
        Self {
            lane_movements: default_lane_movements(),
            lcz_length: default_zone_length(),
            cfz_length: default_zone_length(),
            lane_width: default_lane_width(),
        }
    }
}

impl IntersectionSpec {
    pub fn validate(&self) -> Result<(), GeometryError> {
        for turn in Turn::ALL {
            let n = self.lane_movements.iter().filter(|&&t| t == turn).count();
            if n != 1 {
                return Err(GeometryError::InvalidSpec(format!(
                    "lane_movements must serve `{turn}` on exactly one lane, found {n}"
                )));
            }
        }
        for (name, v) in [
            ("lcz_length", self.lcz_length),
            ("cfz_length", self.cfz_length),
            ("lane_width", self.lane_width),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeometryError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Length of the whole control zone.
    pub fn ctrl_length(&self) -> f64 {
        self.lcz_length + self.cfz_length
    }

    pub fn lane_of(&self, turn: Turn) -> u8 {
        self.lane_movements
            .iter()
            .position(|&t| t == turn)
            .expect("validated layout serves every turn") as u8
    }

    pub fn movement_of_lane(&self, lane: LaneRef) -> Movement {
        Movement::new(lane.leg, self.lane_movements[lane.index as usize])
    }

    pub fn lane_for(&self, m: Movement) -> LaneRef {
        LaneRef {
            leg: m.leg,
            index: self.lane_of(m.turn),
        }
    }

    /// Outbound lane index a movement ends in. Right turns merge into the
    /// lane fed by the straight movement.
    fn exit_lane_index(&self, turn: Turn) -> u8 {
        match turn {
            Turn::Right => self.lane_of(Turn::Straight),
            t => self.lane_of(t),
        }
    }

    /// Half width of the junction box.
    fn half_box(&self) -> f64 {
        LANES_PER_LEG as f64 * self.lane_width
    }

    /// Polyline of the path a movement follows between its stop line and the
    /// far side of the junction box.
    pub fn junction_path(&self, m: Movement) -> JunctionPath {
        let w = self.lane_width;
        let h = self.half_box();
        let entry_off = (self.lane_of(m.turn) as f64 + 0.5) * w;
        let exit_off = (self.exit_lane_index(m.turn) as f64 + 0.5) * w;
        // Built for the south approach (heading north), then rotated.
        let entry = (entry_off, -h);
        let local: Vec<(f64, f64)> = match m.turn {
            Turn::Straight => vec![entry, (exit_off, h)],
            Turn::Left => {
                // Exit on the west leg, outbound lanes sit at y = +offset.
                let exit = (-h, exit_off);
                quarter_arc(entry, exit, (exit.0, entry.1))
            }
            Turn::Right => {
                // Exit on the east leg, outbound lanes sit at y = -offset.
                let exit = (h, -exit_off);
                quarter_arc(entry, exit, (exit.0, entry.1))
            }
        };
        let points: Vec<(f64, f64)> = local
            .into_iter()
            .map(|p| rotate_ccw(p, m.leg.index()))
            .collect();
        JunctionPath::new(points)
    }

    /// Whether the junction paths of two movements intersect anywhere other
    /// than a shared end point.
    pub fn paths_cross(&self, a: Movement, b: Movement) -> bool {
        let pa = self.junction_path(a);
        let pb = self.junction_path(b);
        pa.crosses(&pb, 1e-6 * self.lane_width)
    }

    /// Conflict class between two movements of vehicles already in the
    /// car-following zone. `same_lane` marks vehicles queued in one approach
    /// lane; one lane serves one movement, so identical movements are always
    /// treated as same-lane.
    pub fn movement_conflict(&self, a: Movement, b: Movement, same_lane: bool) -> Option<ConflictKind> {
        if same_lane || a == b {
            return Some(ConflictKind::Diverging);
        }
        if self.paths_cross(a, b) {
            return Some(ConflictKind::Crossing);
        }
        if a.exit_leg() == b.exit_leg() && self.exit_lane_index(a.turn) == self.exit_lane_index(b.turn) {
            return Some(ConflictKind::Converging);
        }
        None
    }
}

fn rotate_ccw((x, y): (f64, f64), quarter_turns: usize) -> (f64, f64) {
    match quarter_turns % 4 {
        0 => (x, y),
        1 => (-y, x),
        2 => (-x, -y),
        _ => (y, -x),
    }
}

const ARC_SEGMENTS: usize = 48;

/// Quarter ellipse (a circle when the legs are equal) from `a` to `b` around
/// the axis-aligned corner `centre`. The path leaves `a` along the y axis and
/// arrives at `b` along the x axis.
fn quarter_arc(a: (f64, f64), b: (f64, f64), centre: (f64, f64)) -> Vec<(f64, f64)> {
    let rx = a.0 - centre.0;
    let ry = b.1 - centre.1;
    (0..=ARC_SEGMENTS)
        .map(|k| {
            let th = std::f64::consts::FRAC_PI_2 * k as f64 / ARC_SEGMENTS as f64;
            (centre.0 + rx * th.cos(), centre.1 + ry * th.sin())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionPath {
    pub points: Vec<(f64, f64)>,
    pub length: f64,
}

impl JunctionPath {
    fn new(points: Vec<(f64, f64)>) -> Self {
        let length = points
            .windows(2)
            .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
            .sum();
        Self { points, length }
    }

    pub fn start(&self) -> (f64, f64) {
        self.points[0]
    }

    pub fn end(&self) -> (f64, f64) {
        *self.points.last().expect("non-empty path")
    }

    fn crosses(&self, other: &JunctionPath, eps: f64) -> bool {
        let shared: Vec<(f64, f64)> = [self.start(), self.end()]
            .into_iter()
            .filter(|p| [other.start(), other.end()].iter().any(|q| dist(*p, *q) <= eps))
            .collect();
        for s in self.points.windows(2) {
            for t in other.points.windows(2) {
                if let Some(hit) = segment_hit(s[0], s[1], t[0], t[1], eps) {
                    if !shared.iter().any(|p| dist(*p, hit) <= 1e3 * eps) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// A point common to both closed segments, if any.
fn segment_hit(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64), eps: f64) -> Option<(f64, f64)> {
    let d = (p2.0 - p1.0) * (q2.1 - q1.1) - (p2.1 - p1.1) * (q2.0 - q1.0);
    let plen = dist(p1, p2).max(eps);
    let qlen = dist(q1, q2).max(eps);
    if d.abs() <= 1e-12 * plen * qlen {
        // Parallel: only collinear overlap matters.
        if cross(p1, p2, q1).abs() > eps * plen {
            return None;
        }
        for c in [q1, q2] {
            if on_segment(p1, p2, c, eps) {
                return Some(c);
            }
        }
        for c in [p1, p2] {
            if on_segment(q1, q2, c, eps) {
                return Some(c);
            }
        }
        return None;
    }
    let t = ((q1.0 - p1.0) * (q2.1 - q1.1) - (q1.1 - p1.1) * (q2.0 - q1.0)) / d;
    let u = ((q1.0 - p1.0) * (p2.1 - p1.1) - (q1.1 - p1.1) * (p2.0 - p1.0)) / d;
    let tol_t = eps / plen;
    let tol_u = eps / qlen;
    if (-tol_t..=1.0 + tol_t).contains(&t) && (-tol_u..=1.0 + tol_u).contains(&u) {
        Some((p1.0 + t * (p2.0 - p1.0), p1.1 + t * (p2.1 - p1.1)))
    } else {
        None
    }
}

fn on_segment(a: (f64, f64), b: (f64, f64), c: (f64, f64), eps: f64) -> bool {
    c.0 >= a.0.min(b.0) - eps && c.0 <= a.0.max(b.0) + eps && c.1 >= a.1.min(b.1) - eps && c.1 <= a.1.max(b.1) + eps
}

/// Integer cell of the relative coordinate system: `x` is the longitudinal
/// slot, `y` the lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RcsPoint {
    pub x: u32,
    pub y: u32,
}

impl RcsPoint {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: RcsPoint) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn euclidean(self, other: RcsPoint) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

impl fmt::Display for RcsPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// World position in a leg-aligned frame: distance travelled from the control
/// zone entry and lateral offset from the centre of lane 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPoint {
    pub longitudinal: f64,
    pub lateral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcsGrid {
    pub lane_count: u32,
    pub slot_count: u32,
    /// Longitudinal pitch between columns, metres.
    pub slot_length: f64,
    pub lane_width: f64,
    /// Longitudinal world coordinate of column 0.
    pub origin: f64,
}

impl RcsGrid {
    pub fn new(lane_count: u32, slot_count: u32, slot_length: f64, lane_width: f64, origin: f64) -> Self {
        Self {
            lane_count,
            slot_count,
            slot_length,
            lane_width,
            origin,
        }
    }

    /// Bare grid used by the planner, with unit pitch.
    pub fn cells(lane_count: u32, slot_count: u32) -> Self {
        Self::new(lane_count, slot_count, 1.0, 1.0, 0.0)
    }

    pub fn contains(&self, p: RcsPoint) -> bool {
        p.x < self.slot_count && p.y < self.lane_count
    }

    pub fn cell_center(&self, p: RcsPoint) -> WorldPoint {
        WorldPoint {
            longitudinal: self.origin + p.x as f64 * self.slot_length,
            lateral: p.y as f64 * self.lane_width,
        }
    }

    /// Largest Manhattan distance between two cells.
    pub fn diameter(&self) -> u32 {
        self.slot_count.saturating_sub(1) + self.lane_count.saturating_sub(1)
    }

    /// Nearest cell to a world position; equidistant candidates resolve to the
    /// smaller coordinate.
    pub fn snap(&self, pos: WorldPoint) -> Result<RcsPoint, GeometryError> {
        let gx = (pos.longitudinal - self.origin) / self.slot_length;
        let gy = pos.lateral / self.lane_width;
        let inside = |g: f64, n: u32| g.is_finite() && g >= -0.5 && g <= n as f64 - 0.5;
        if self.slot_count == 0 || self.lane_count == 0 || !inside(gx, self.slot_count) || !inside(gy, self.lane_count) {
            return Err(GeometryError::OutOfZone {
                longitudinal: pos.longitudinal,
                lateral: pos.lateral,
            });
        }
        Ok(RcsPoint::new(
            round_half_down(gx).clamp(0, self.slot_count as i64 - 1) as u32,
            round_half_down(gy).clamp(0, self.lane_count as i64 - 1) as u32,
        ))
    }
}

fn round_half_down(v: f64) -> i64 {
    let f = v.floor();
    if v - f > 0.5 {
        f as i64 + 1
    } else {
        f as i64
    }
}

/// Free-function form of [`RcsGrid::snap`].
pub fn snap_to_rcs(pos: WorldPoint, grid: &RcsGrid) -> Result<RcsPoint, GeometryError> {
    grid.snap(pos)
}

/// Longitudinal state of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    /// Distance travelled from the control zone entry, metres.
    pub position: f64,
    pub velocity: f64,
    pub accel: f64,
    pub lane: LaneRef,
    pub movement: Movement,
    /// Step at which the vehicle entered the control zone.
    pub t_in: Option<u64>,
    /// Step at which the vehicle reached the stop line.
    pub t_out: Option<u64>,
}

impl VehicleState {
    pub fn new(id: u32, lane: LaneRef, movement: Movement) -> Self {
        Self {
            id,
            position: 0.0,
            velocity: 0.0,
            accel: 0.0,
            lane,
            movement,
            t_in: None,
            t_out: None,
        }
    }
}

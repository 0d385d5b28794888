//! Per-vehicle, per-step CSV records.

use std::fmt;
use std::io::{self, Write};

use serde::Serialize;

use crate::geometry::LaneRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Zone {
    #[serde(rename = "LCZ")]
    LaneChange,
    #[serde(rename = "CFZ")]
    CarFollow,
    #[serde(rename = "JCT")]
    Junction,
}

impl Zone {
    pub fn tag(self) -> &'static str {
        match self {
            Zone::LaneChange => "LCZ",
            Zone::CarFollow => "CFZ",
            Zone::Junction => "JCT",
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// State of one vehicle after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub id: u32,
    pub step: u64,
    pub lane: LaneRef,
    /// Distance travelled from the control zone entry, m.
    pub p: f64,
    pub v: f64,
    pub u: f64,
    pub zone: Zone,
}

pub const LOG_HEADER: &str = "id,t,lane,p,v,u,zone";

/// Prints `-0.000` as `0.000` so that the text does not depend on the sign
/// of a vanishing value.
fn fixed(x: f64, digits: usize) -> String {
    let s = format!("{x:.digits$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

impl LogRecord {
    pub fn write_csv(&self, dt: f64, out: &mut dyn Write) -> io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            self.id,
            fixed(self.step as f64 * dt, 1),
            self.lane,
            fixed(self.p, 3),
            fixed(self.v, 3),
            fixed(self.u, 3),
            self.zone
        )
    }
}

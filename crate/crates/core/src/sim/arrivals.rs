//! Poisson vehicle generation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::geometry::{Leg, Movement, Turn, LANES_PER_LEG};

use super::config::{ConfigError, SimConfig};

/// One vehicle demand at the control zone entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub id: u32,
    /// Step window in which the vehicle shows up.
    pub step: u64,
    pub leg: Leg,
    /// Lane the vehicle enters in.
    pub lane: u8,
    pub movement: Movement,
}

/// Independent Poisson counts per leg and step window.
#[derive(Debug, Clone, Copy)]
pub struct ArrivalProcess {
    /// Expected arrivals per leg and window.
    pub lambda: f64,
    poisson: Poisson<f64>,
}

impl ArrivalProcess {
    pub fn new(lambda: f64) -> Result<Self, ConfigError> {
        let poisson = Poisson::new(lambda).map_err(|e| ConfigError::Invalid {
            field: "volume".into(),
            reason: format!("arrival rate {lambda} per window: {e}"),
        })?;
        Ok(Self { lambda, poisson })
    }

    /// Rate for a volume in veh/h per approach and a window of `dt` seconds.
    pub fn from_volume(volume: f64, dt: f64) -> Result<Self, ConfigError> {
        Self::new(volume * dt / 3600.0)
    }

    pub fn sample_count<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.poisson.sample(rng) as u64
    }
}

/// Arrivals of one window on every leg, with uniform entry lane and
/// movement. Ids are left at zero; [`generate_arrivals`] numbers them.
pub fn sample_arrivals<R: Rng + ?Sized>(process: &ArrivalProcess, rng: &mut R, window: u64) -> Vec<Arrival> {
    let mut out = Vec::new();
    for leg in Leg::ALL {
        for _ in 0..process.sample_count(rng) {
            let lane = rng.random_range(0..LANES_PER_LEG) as u8;
            let turn = Turn::ALL[rng.random_range(0..Turn::ALL.len())];
            out.push(Arrival {
                id: 0,
                step: window,
                leg,
                lane,
                movement: Movement::new(leg, turn),
            });
        }
    }
    out
}

/// The first `cfg.vehicles` arrivals of the seeded stream. Every pipeline run
/// with the same config and seed consumes this exact list.
pub fn generate_arrivals(cfg: &SimConfig, seed: u64) -> Result<Vec<Arrival>, ConfigError> {
    let process = ArrivalProcess::from_volume(cfg.volume, cfg.dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cfg.vehicles);
    let mut window = 0;
    while out.len() < cfg.vehicles {
        for mut a in sample_arrivals(&process, &mut rng, window) {
            if out.len() == cfg.vehicles {
                break;
            }
            a.id = out.len() as u32 + 1;
            out.push(a);
        }
        window += 1;
    }
    Ok(out)
}

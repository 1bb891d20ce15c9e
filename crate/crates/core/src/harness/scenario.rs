//! Road scenarios: vehicle placement, ground-truth motion and per-vehicle
//! DT task sizes.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::channel::Pose;
use crate::error::HarnessError;
use crate::planner::DtTask;
use crate::tracking::VehicleState;

/// Rejections allowed across one scenario's placement.
pub const PLACEMENT_ATTEMPTS: usize = 10_000;

/// Vehicles travel towards −x at constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub cycles_per_bit: f64,
    pub data_bits: f64,
}

impl Vehicle {
    pub fn position(&self, t: f64) -> (f64, f64) {
        (self.x - self.speed * t, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub rsus: Vec<(f64, f64)>,
    pub vehicles: Vec<Vehicle>,
    /// Reflection coefficient at t = 0 per (RSU, vehicle).
    pub reflection: Vec<Vec<Complex64>>,
}

/// Sequential uniform placement (a Poisson process conditioned on the
/// vehicle count) with rejection until every centre-to-centre gap is at
/// least `min_gap_m`. Each vehicle draws all of its attributes when placed,
/// so the first K vehicles of a larger scenario are the K-vehicle scenario.
pub fn generate_scenario<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Scenario, HarnessError> {
    cfg.validate()?;
    let rsus = cfg.rsus();
    let lane_width = cfg.road_width_m / cfg.lanes as f64;
    let mut vehicles: Vec<Vehicle> = Vec::with_capacity(cfg.vehicles);
    let mut reflection: Vec<Vec<Complex64>> = vec![Vec::with_capacity(cfg.vehicles); rsus.len()];
    let mut rejections = 0;
    while vehicles.len() < cfg.vehicles {
        let x = rng.random_range(0.0..cfg.road_length_m);
        let lane = rng.random_range(0..cfg.lanes);
        let y = (lane as f64 + 0.5) * lane_width;
        if vehicles.iter().any(|v| (v.x - x).hypot(v.y - y) < cfg.min_gap_m) {
            rejections += 1;
            if rejections >= PLACEMENT_ATTEMPTS {
                return Err(HarnessError::PlacementExhausted { attempts: rejections });
            }
            continue;
        }
        vehicles.push(Vehicle {
            x,
            y,
            speed: uniform(rng, cfg.speed_min_mps, cfg.speed_max_mps),
            cycles_per_bit: uniform(rng, cfg.cycles_per_bit_min, cfg.cycles_per_bit_max),
            data_bits: uniform(rng, cfg.data_bits_min, cfg.data_bits_max),
        });
        for row in &mut reflection {
            row.push(Complex64::from_polar(cfg.reflection_magnitude, rng.random_range(0.0..std::f64::consts::TAU)));
        }
    }
    Ok(Scenario { rsus, vehicles, reflection })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl Scenario {
    pub fn n_rsu(&self) -> usize {
        self.rsus.len()
    }

    pub fn n_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    pub fn positions(&self, t: f64) -> Vec<(f64, f64)> {
        self.vehicles.iter().map(|v| v.position(t)).collect()
    }

    /// True state of vehicle `k` seen from RSU `m` at time `t`. The
    /// reflection coefficient scales with inverse distance.
    pub fn truth(&self, m: usize, k: usize, t: f64) -> Result<VehicleState, HarnessError> {
        let v = &self.vehicles[k];
        let p0 = Pose::from_cartesian(self.rsus[m], v.position(0.0))?;
        let p = Pose::from_cartesian(self.rsus[m], v.position(t))?;
        Ok(VehicleState {
            angle: p.angle,
            distance: p.distance,
            velocity: v.speed,
            beta: self.reflection[m][k] * (p0.distance / p.distance),
        })
    }

    /// DT task of every vehicle given its workload.
    pub fn tasks(&self, workloads: &[f64]) -> Vec<DtTask> {
        self.vehicles
            .iter()
            .zip(workloads)
            .map(|(v, &w)| DtTask {
                cycles_per_bit: v.cycles_per_bit,
                bits: v.data_bits,
                workload: w,
            })
            .collect()
    }
}

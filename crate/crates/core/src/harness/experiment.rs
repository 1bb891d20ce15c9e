//! Monte-Carlo sweeps. Every compared method sees the same scenario and
//! noise draws for a given seed; seeds run in parallel and results come back
//! in job order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::scenario::generate_scenario;
use super::slot::{Method, Simulation, SlotRecord};
use crate::error::HarnessError;
use crate::link::{dt_power, min_cpu_frequency};
use crate::tracking::kalman::{ekf_step, ukf_step, GaussianBelief, UkfParams};
use crate::tracking::metrics::tracking_metrics;
use crate::tracking::particle::{particle_filter_step, ParticleBelief};
use crate::tracking::{kinematic_step, synthesize_measurement, VehicleState};

/// One CSV row: a (sweep, method, sweep point, seed) cell. Metrics that do
/// not apply to the sweep are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep: String,
    pub method: String,
    pub parameter: String,
    pub value: f64,
    pub seed: u64,
    pub failed: bool,
    pub slots: usize,
    pub degraded_slots: usize,
    pub mean_rate_bps_hz: Option<f64>,
    pub mean_rcrb_angle_deg: Option<f64>,
    pub mean_rcrb_dist_m: Option<f64>,
    pub rmse_angle_deg: Option<f64>,
    pub rmse_dist_m: Option<f64>,
    pub rmse_velocity_mps: Option<f64>,
    pub dt_rmse_x_m: Option<f64>,
    pub dt_rmse_y_m: Option<f64>,
    pub mean_power_w: Option<f64>,
    pub mean_ao_iterations: Option<f64>,
    pub data_bits: Option<f64>,
    pub cycles_per_bit: Option<f64>,
    pub f_min_hz: Option<f64>,
    pub p_dt_w: Option<f64>,
}

impl ResultRow {
    pub fn new(sweep: &str, method: &str, parameter: &str, value: f64, seed: u64) -> Self {
        Self {
            sweep: sweep.into(),
            method: method.into(),
            parameter: parameter.into(),
            value,
            seed,
            failed: false,
            slots: 0,
            degraded_slots: 0,
            mean_rate_bps_hz: None,
            mean_rcrb_angle_deg: None,
            mean_rcrb_dist_m: None,
            rmse_angle_deg: None,
            rmse_dist_m: None,
            rmse_velocity_mps: None,
            dt_rmse_x_m: None,
            dt_rmse_y_m: None,
            mean_power_w: None,
            mean_ao_iterations: None,
            data_bits: None,
            cycles_per_bit: None,
            f_min_hz: None,
            p_dt_w: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sweep {
    /// Full pipeline against the vehicle count.
    Vehicles { counts: Vec<usize>, methods: Vec<Method> },
    /// Minimum CPU frequency against the deadline, with no sensing workload.
    Latency { t_max_s: Vec<f64>, data_bits: Vec<f64>, cycles_per_bit: f64 },
    /// DT power against CPU frequency.
    CpuPower { freq_hz: Vec<f64>, cycles_per_bit: Vec<f64>, kappa: f64 },
    /// PF, EKF and UKF on identical measurements against the vehicle count.
    Tracking { counts: Vec<usize> },
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::Vehicles { .. } => "vehicles",
            Sweep::Latency { .. } => "latency",
            Sweep::CpuPower { .. } => "cpu-power",
            Sweep::Tracking { .. } => "tracking",
        }
    }

    /// Figure-style defaults.
    pub fn defaults() -> Vec<Sweep> {
        vec![
            Sweep::Vehicles { counts: vec![2, 4, 6, 8], methods: Method::ALL.to_vec() },
            Sweep::Latency {
                t_max_s: (1..=10).map(|i| i as f64 * 0.005).collect(),
                data_bits: vec![1e3, 2e3, 3e3],
                cycles_per_bit: 2e3,
            },
            Sweep::CpuPower {
                freq_hz: (1..=10).map(|i| i as f64 * 1e8).collect(),
                cycles_per_bit: vec![1e3, 2e3],
                kappa: 1e-28,
            },
            Sweep::Tracking { counts: vec![2, 4, 6, 8] },
        ]
    }

    pub fn run(&self, cfg: &ScenarioConfig, seeds: &[u64]) -> Result<Vec<ResultRow>, HarnessError> {
        cfg.validate()?;
        match self {
            Sweep::Vehicles { counts, methods } => {
                let jobs: Vec<(usize, u64, Method)> = counts
                    .iter()
                    .flat_map(|&k| seeds.iter().flat_map(move |&s| methods.iter().map(move |&m| (k, s, m))))
                    .collect();
                jobs.par_iter()
                    .map(|&(k, seed, method)| {
                        let cfg = ScenarioConfig { vehicles: k, ..cfg.clone() };
                        vehicles_row(&cfg, method, seed)
                    })
                    .collect()
            }
            Sweep::Latency { t_max_s, data_bits, cycles_per_bit } => {
                let mut rows = Vec::new();
                for &d in data_bits {
                    for &t in t_max_s {
                        // One curve per data size.
                        let mut row = ResultRow::new("latency", &format!("linear-{d}-bits"), "t_max_s", t, 0);
                        row.data_bits = Some(d);
                        row.cycles_per_bit = Some(*cycles_per_bit);
                        row.f_min_hz = Some(min_cpu_frequency(*cycles_per_bit, d, 0.0, t)?);
                        rows.push(row);
                    }
                }
                Ok(rows)
            }
            Sweep::CpuPower { freq_hz, cycles_per_bit, kappa } => {
                let mut rows = Vec::new();
                for &c in cycles_per_bit {
                    for &f in freq_hz {
                        let mut row = ResultRow::new("cpu-power", &format!("cubic-{c}-cycles-per-bit"), "freq_hz", f, 0);
                        row.cycles_per_bit = Some(c);
                        row.p_dt_w = Some(dt_power(*kappa, f, c));
                        rows.push(row);
                    }
                }
                Ok(rows)
            }
            Sweep::Tracking { counts } => {
                let jobs: Vec<(usize, u64)> = counts.iter().flat_map(|&k| seeds.iter().map(move |&s| (k, s))).collect();
                let nested: Vec<Vec<ResultRow>> = jobs
                    .par_iter()
                    .map(|&(k, seed)| {
                        let cfg = ScenarioConfig { vehicles: k, ..cfg.clone() };
                        tracking_rows(&cfg, seed)
                    })
                    .collect::<Result<_, _>>()?;
                Ok(nested.into_iter().flatten().collect())
            }
        }
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn rms(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    mean(v.into_iter().map(|x| x * x)).map(f64::sqrt)
}

/// Aggregates slot records into one row. Degraded slots are counted and
/// excluded from the metrics.
pub fn summarize_records(row: &mut ResultRow, records: &[SlotRecord]) {
    row.slots = records.len();
    row.degraded_slots = records.iter().filter(|r| r.degraded).count();
    let ok: Vec<&SlotRecord> = records.iter().filter(|r| !r.degraded).collect();
    let served = || ok.iter().flat_map(|r| r.pairs.iter().filter(|p| p.served));
    row.mean_rate_bps_hz = mean(served().filter_map(|p| p.rate_bps_hz));
    row.mean_rcrb_angle_deg = mean(served().filter_map(|p| p.rcrb_angle_deg));
    row.mean_rcrb_dist_m = mean(served().filter_map(|p| p.rcrb_dist_m));
    let all = || records.iter().flat_map(|r| r.pairs.iter());
    row.rmse_angle_deg = rms(all().map(|p| p.est_angle_deg - p.true_angle_deg));
    row.rmse_dist_m = rms(all().map(|p| p.est_dist_m - p.true_dist_m));
    let vehicles = || ok.iter().flat_map(|r| r.vehicles.iter());
    row.dt_rmse_x_m = rms(vehicles().filter_map(|v| v.dt_err_x_m));
    row.dt_rmse_y_m = rms(vehicles().filter_map(|v| v.dt_err_y_m));
    row.mean_power_w = mean(ok.iter().flat_map(|r| r.rsus.iter().map(|q| q.p_total_w)));
    row.mean_ao_iterations = mean(ok.iter().map(|r| r.ao_iterations as f64));
}

fn vehicles_row(cfg: &ScenarioConfig, method: Method, seed: u64) -> Result<ResultRow, HarnessError> {
    let mut row = ResultRow::new("vehicles", method.name(), "vehicles", cfg.vehicles as f64, seed);
    match Simulation::run(cfg, method, seed) {
        Ok(records) => summarize_records(&mut row, &records),
        Err(HarnessError::PlacementExhausted { .. } | HarnessError::Plan(_)) => row.failed = true,
        Err(e) => return Err(e),
    }
    Ok(row)
}

const TRACK_STREAM: u64 = 4;

/// Runs PF, EKF and UKF side by side on every (RSU, vehicle) track of one
/// scenario with shared measurements, one row per filter.
pub fn tracking_rows(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<ResultRow>, HarnessError> {
    let mut scenario_rng = ChaCha8Rng::seed_from_u64(seed);
    let scenario = match generate_scenario(cfg, &mut scenario_rng) {
        Ok(s) => s,
        Err(HarnessError::PlacementExhausted { .. }) => {
            return Ok(["pf", "ekf", "ukf"]
                .iter()
                .map(|f| ResultRow { failed: true, ..ResultRow::new("tracking", f, "vehicles", cfg.vehicles as f64, seed) })
                .collect())
        }
        Err(e) => return Err(e),
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let mut pf_rng = ChaCha8Rng::seed_from_u64(seed);
    pf_rng.set_stream(TRACK_STREAM);
    let noise = cfg.noise();
    let prior = noise.q1.map(|v| v * cfg.prior_scale);
    let ukf = UkfParams::default();

    let mut est: [Vec<VehicleState>; 3] = Default::default();
    let mut truth = Vec::new();
    let mut rsu_of = Vec::new();
    for m in 0..scenario.n_rsu() {
        for k in 0..scenario.n_vehicles() {
            let start = kinematic_step(&scenario.truth(m, k, -cfg.slot_s)?, 0.0, &noise, &mut noise_rng);
            let mut pf = ParticleBelief::gaussian(&start, prior, cfg.particles, &mut pf_rng)?;
            let mut ekf = GaussianBelief::new(&start, prior);
            let mut ukf_b = ekf.clone();
            for i in 0..cfg.slots {
                let q = scenario.truth(m, k, i as f64 * cfg.slot_s)?;
                let z = synthesize_measurement(&q, &noise, &mut noise_rng);
                let (next, out) = particle_filter_step(&pf, &z, cfg.slot_s, &noise, &mut pf_rng)?;
                pf = next;
                let (next, e) = ekf_step(&ekf, &z, cfg.slot_s, &noise);
                ekf = next;
                est[1].push(e);
                let (next, u) = ukf_step(&ukf_b, &z, cfg.slot_s, &noise, &ukf);
                ukf_b = next;
                est[2].push(u);
                est[0].push(out.estimate);
                truth.push(q);
                rsu_of.push(m);
            }
        }
    }
    let mut rows = Vec::with_capacity(3);
    for (f, e) in ["pf", "ekf", "ukf"].iter().zip(&est) {
        let mut row = ResultRow::new("tracking", f, "vehicles", cfg.vehicles as f64, seed);
        row.slots = cfg.slots;
        let pooled = tracking_metrics(e, &truth, (0.0, 0.0))?;
        row.rmse_angle_deg = Some(pooled.rmse_angle_deg);
        row.rmse_dist_m = Some(pooled.rmse_dist);
        row.rmse_velocity_mps = Some(pooled.rmse_vel);
        // DT coordinates need each track's own RSU as origin.
        let (mut sx, mut sy) = (Vec::new(), Vec::new());
        for ((ei, ti), &m) in e.iter().zip(&truth).zip(&rsu_of) {
            let one = tracking_metrics(std::slice::from_ref(ei), std::slice::from_ref(ti), scenario.rsus[m])?;
            sx.push(one.rmse_x);
            sy.push(one.rmse_y);
        }
        row.dt_rmse_x_m = rms(sx);
        row.dt_rmse_y_m = rms(sy);
        rows.push(row);
    }
    Ok(rows)
}

/// Mean with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(x: &[f64]) -> Option<Self> {
        let n = x.len();
        let m = mean(x.iter().copied())?;
        let ci95 = if n > 1 {
            let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean: m, ci95, n })
    }
}

//! Flat key-value scenario configuration. Every key carries its unit in its
//! name and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ArrayGeometry;
use crate::conic::{SolverOptions, SubproblemParams};
use crate::error::HarnessError;
use crate::link::{SemanticProfile, WorkloadCoefficients, WorkloadShape};
use crate::planner::{AnnealParams, AoParams};
use crate::tracking::NoiseConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub rsu_x_m: Vec<f64>,
    pub rsu_y_m: Vec<f64>,
    pub road_length_m: f64,
    pub road_width_m: f64,
    pub lanes: usize,
    pub vehicles: usize,
    pub vehicle_length_m: f64,
    pub vehicle_width_m: f64,
    pub min_gap_m: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub slot_s: f64,
    pub slots: usize,

    pub n_tx: usize,
    pub n_rx: usize,
    pub carrier_hz: f64,

    /// Process variances: angle deg², distance m², velocity (m/s)²,
    /// reflection coefficient.
    pub process_var: [f64; 4],
    /// Measurement variances: angle deg², distance m², velocity (m/s)².
    pub measurement_var: [f64; 3],
    pub particles: usize,
    /// Initial belief covariance as a multiple of the process variances.
    pub prior_scale: f64,

    pub power_budget_dbm: f64,
    pub noise_comm_dbm: f64,
    pub noise_sense_dbm: f64,
    pub sensing_samples: f64,
    pub reflection_magnitude: f64,

    pub iota_bits_per_word: f64,
    /// Extraction-ratio floor the BLEU profile is calibrated to.
    pub rho_min: f64,
    pub rho_init: f64,
    pub semantic_power_w_per_nat: f64,

    pub kappa: f64,
    pub cycles_per_bit_min: f64,
    pub cycles_per_bit_max: f64,
    pub data_bits_min: f64,
    pub data_bits_max: f64,
    pub t_max_s: f64,
    pub f_max_hz: f64,
    pub nu_dist_cycles_per_m: f64,
    /// Array size the distance coefficients are quoted for. The distance
    /// CRB of a ULA falls as n_tx⁻⁵, so the distance weight is multiplied
    /// by (n_tx/reference)⁵ and ν_dist by (n_tx/reference)^2.5. Setting it
    /// to n_tx disables the rescaling.
    pub distance_reference_n_tx: f64,
    pub nu_angle_cycles_per_deg: f64,
    pub nu_offset_var_cycles2: f64,

    pub epsilon: f64,
    pub weight_dist_per_m2: f64,
    pub weight_angle_per_deg2: f64,
    pub tie_break: f64,
    pub solver_tol: f64,
    pub ao_tol_bps_hz: f64,
    pub ao_max_iter: usize,
    pub randomization_samples: usize,

    pub sa_initial_temperature: f64,
    pub sa_cooling: f64,
    pub sa_min_temperature: f64,
    pub sa_max_iter: usize,

    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rsu_x_m: vec![0.0, 100.0],
            rsu_y_m: vec![-5.0, -5.0],
            road_length_m: 100.0,
            road_width_m: 10.0,
            lanes: 2,
            vehicles: 5,
            vehicle_length_m: 4.5,
            vehicle_width_m: 2.0,
            min_gap_m: 3.5,
            speed_min_mps: 10.0,
            speed_max_mps: 20.0,
            slot_s: 0.02,
            slots: 10,
            n_tx: 8,
            n_rx: 2,
            carrier_hz: 50e9,
            process_var: [0.02, 0.3, 1.0, 0.1],
            measurement_var: [0.04, 0.06, 1.0],
            particles: 500,
            prior_scale: 10.0,
            power_budget_dbm: 25.0,
            noise_comm_dbm: -30.0,
            noise_sense_dbm: -30.0,
            sensing_samples: 256.0,
            reflection_magnitude: 1.0,
            iota_bits_per_word: 1.1,
            rho_min: 0.81,
            rho_init: 0.81,
            semantic_power_w_per_nat: 0.01,
            kappa: 1e-31,
            cycles_per_bit_min: 1e3,
            cycles_per_bit_max: 2e3,
            data_bits_min: 1e3,
            data_bits_max: 3e3,
            t_max_s: 0.015,
            f_max_hz: 5.8e9,
            nu_dist_cycles_per_m: 121.6e6,
            distance_reference_n_tx: 310.0,
            nu_angle_cycles_per_deg: 243.2e6,
            nu_offset_var_cycles2: 1000.0,
            epsilon: 0.5,
            weight_dist_per_m2: 1.0,
            weight_angle_per_deg2: 1.0,
            tie_break: 1e-8,
            solver_tol: 1e-9,
            ao_tol_bps_hz: 1e-3,
            ao_max_iter: 50,
            randomization_samples: 100,
            sa_initial_temperature: 100.0,
            sa_cooling: 0.95,
            sa_min_temperature: 1e-2,
            sa_max_iter: 100,
            seed: 1,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serializes");
        format!("{:x}", Sha256::digest(json))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.rsu_x_m.is_empty() || self.rsu_x_m.len() != self.rsu_y_m.len() {
            return bad("rsu_x_m and rsu_y_m must be non-empty and equally long".into());
        }
        if self.vehicles == 0 {
            return bad("vehicles must be at least 1".into());
        }
        if self.lanes == 0 || self.n_tx == 0 || self.n_rx == 0 || self.particles == 0 {
            return bad("lanes, n_tx, n_rx and particles must be at least 1".into());
        }
        let positive = [
            ("road_length_m", self.road_length_m),
            ("road_width_m", self.road_width_m),
            ("vehicle_length_m", self.vehicle_length_m),
            ("vehicle_width_m", self.vehicle_width_m),
            ("min_gap_m", self.min_gap_m),
            ("speed_min_mps", self.speed_min_mps),
            ("slot_s", self.slot_s),
            ("carrier_hz", self.carrier_hz),
            ("prior_scale", self.prior_scale),
            ("sensing_samples", self.sensing_samples),
            ("reflection_magnitude", self.reflection_magnitude),
            ("distance_reference_n_tx", self.distance_reference_n_tx),
            ("iota_bits_per_word", self.iota_bits_per_word),
            ("rho_min", self.rho_min),
            ("semantic_power_w_per_nat", self.semantic_power_w_per_nat),
            ("kappa", self.kappa),
            ("cycles_per_bit_min", self.cycles_per_bit_min),
            ("data_bits_min", self.data_bits_min),
            ("t_max_s", self.t_max_s),
            ("f_max_hz", self.f_max_hz),
            ("solver_tol", self.solver_tol),
            ("ao_tol_bps_hz", self.ao_tol_bps_hz),
            ("sa_initial_temperature", self.sa_initial_temperature),
            ("sa_min_temperature", self.sa_min_temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        let nonneg = [
            ("nu_dist_cycles_per_m", self.nu_dist_cycles_per_m),
            ("nu_angle_cycles_per_deg", self.nu_angle_cycles_per_deg),
            ("nu_offset_var_cycles2", self.nu_offset_var_cycles2),
            ("weight_dist_per_m2", self.weight_dist_per_m2),
            ("weight_angle_per_deg2", self.weight_angle_per_deg2),
            ("tie_break", self.tie_break),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.speed_max_mps < self.speed_min_mps
            || self.cycles_per_bit_max < self.cycles_per_bit_min
            || self.data_bits_max < self.data_bits_min
        {
            return bad("range maxima must not be below minima".into());
        }
        if !(self.rho_min <= 1.0 && self.rho_init <= 1.0 && self.rho_init > 0.0) {
            return bad("rho_min and rho_init must lie in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]".into());
        }
        if !(self.sa_cooling > 0.0 && self.sa_cooling < 1.0) {
            return bad("sa_cooling must lie in (0, 1)".into());
        }
        if self.process_var.iter().chain(&self.measurement_var).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("variances must be non-negative".into());
        }
        if self.ao_max_iter == 0 {
            return bad("ao_max_iter must be at least 1".into());
        }
        for (&x, &y) in self.rsu_x_m.iter().zip(&self.rsu_y_m) {
            if y >= 0.0 && y <= self.road_width_m {
                return bad(format!("RSU at ({x}, {y}) sits on the road"));
            }
        }
        SemanticProfile::calibrated(self.iota_bits_per_word, self.rho_min)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn rsus(&self) -> Vec<(f64, f64)> {
        self.rsu_x_m.iter().copied().zip(self.rsu_y_m.iter().copied()).collect()
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(self.n_tx, self.n_rx, self.carrier_hz)
    }

    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig::from_degrees(self.process_var, self.measurement_var)
    }

    /// n_tx over the distance reference array size.
    pub fn aperture_ratio(&self) -> f64 {
        self.n_tx as f64 / self.distance_reference_n_tx
    }

    pub fn power_budget_w(&self) -> f64 {
        dbm_to_watts(self.power_budget_dbm)
    }

    pub fn subproblem_params(&self) -> SubproblemParams {
        SubproblemParams {
            power_budget: self.power_budget_w(),
            noise_comm: dbm_to_watts(self.noise_comm_dbm),
            noise_sense: dbm_to_watts(self.noise_sense_dbm),
            t_obs: self.sensing_samples,
            iota: self.iota_bits_per_word,
            semantic_power: self.semantic_power_w_per_nat,
            epsilon: self.epsilon,
            weight_dist: self.weight_dist_per_m2 * self.aperture_ratio().powi(5),
            weight_angle: self.weight_angle_per_deg2,
            tie_break: self.tie_break,
            solver: SolverOptions { tol: self.solver_tol, ..SolverOptions::default() },
        }
    }

    pub fn ao_params(&self) -> AoParams {
        AoParams {
            rho_lb: self.rho_min,
            rho_init: self.rho_init,
            tol: self.ao_tol_bps_hz,
            max_iter: self.ao_max_iter,
            n_random: self.randomization_samples,
            ..AoParams::new(self.rho_min)
        }
    }

    pub fn anneal_params(&self) -> AnnealParams {
        AnnealParams {
            initial_temperature: self.sa_initial_temperature,
            cooling: self.sa_cooling,
            min_temperature: self.sa_min_temperature,
            max_iter: self.sa_max_iter,
        }
    }

    pub fn workload(&self, offset: f64) -> WorkloadCoefficients {
        WorkloadCoefficients {
            nu_dist: self.nu_dist_cycles_per_m * self.aperture_ratio().powf(2.5),
            nu_angle: self.nu_angle_cycles_per_deg,
            nu_offset: offset,
            shape: WorkloadShape::Linear,
        }
    }
}

//! Transmit covariance, semantic rate, extraction-ratio bound and the
//! power/latency bookkeeping for semantic extraction, transmission and
//! digital-twin computing.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::LinkError;
use crate::linalg::{cidentity, czeros, hermitian_part, ln_det_hpd, min_eigenvalue, re_trace, CMat};

/// Relative eigenvalue floor used when auditing PSD matrices.
pub const PSD_FLOOR: f64 = 1e-9;

/// Beamforming and resource decisions of one RSU.
#[derive(Debug, Clone, PartialEq)]
pub struct RsuPlan {
    /// Communication covariance per vehicle; zero for vehicles not served.
    pub comm: Vec<CMat>,
    /// Aggregated sensing covariance.
    pub sense: CMat,
    pub serve: Vec<bool>,
    pub rho: Vec<f64>,
    /// DT computing frequency per vehicle, Hz.
    pub cpu_freq: Vec<f64>,
    /// bits/s/Hz.
    pub rate_epigraph: Vec<f64>,
    pub crb_epigraph: Vec<f64>,
}

impl RsuPlan {
    pub fn zeros(n_vehicles: usize, n_tx: usize) -> Self {
        Self {
            comm: vec![czeros(n_tx, n_tx); n_vehicles],
            sense: czeros(n_tx, n_tx),
            serve: vec![false; n_vehicles],
            rho: vec![1.0; n_vehicles],
            cpu_freq: vec![0.0; n_vehicles],
            rate_epigraph: vec![0.0; n_vehicles],
            crb_epigraph: vec![0.0; n_vehicles],
        }
    }

    pub fn served(&self) -> impl Iterator<Item = usize> + '_ {
        self.serve.iter().enumerate().filter(|(_, &s)| s).map(|(k, _)| k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamPlan {
    pub rsus: Vec<RsuPlan>,
}

impl BeamPlan {
    pub fn zeros(n_rsu: usize, n_vehicles: usize, n_tx: usize) -> Self {
        Self {
            rsus: (0..n_rsu).map(|_| RsuPlan::zeros(n_vehicles, n_tx)).collect(),
        }
    }

    pub fn n_vehicles(&self) -> usize {
        self.rsus.first().map_or(0, |r| r.serve.len())
    }

    /// RSU serving vehicle `k`, if any.
    pub fn server_of(&self, k: usize) -> Option<usize> {
        self.rsus.iter().position(|r| r.serve[k])
    }

    /// Checks PSD floors, exclusive service and ratio bounds. Returns a list
    /// of human-readable violations.
    pub fn audit(&self, rho_lb: f64, tol: f64) -> Vec<String> {
        let mut issues = Vec::new();
        for (m, rsu) in self.rsus.iter().enumerate() {
            let mut check_psd = |name: String, x: &CMat| {
                let floor = -PSD_FLOOR * re_trace(x).abs().max(1.0);
                if min_eigenvalue(x) < floor {
                    issues.push(format!("{name} at RSU {m} is not PSD"));
                }
            };
            for (k, w) in rsu.comm.iter().enumerate() {
                check_psd(format!("W[{k}]"), w);
            }
            check_psd("R".into(), &rsu.sense);
            for k in rsu.served() {
                let rho = rsu.rho[k];
                if rho < rho_lb - tol || rho > 1.0 + tol {
                    issues.push(format!("rho {rho} outside [{rho_lb}, 1] at RSU {m}, vehicle {k}"));
                }
            }
        }
        for k in 0..self.n_vehicles() {
            let count = self.rsus.iter().filter(|r| r.serve[k]).count();
            if count != 1 {
                issues.push(format!("vehicle {k} served by {count} RSUs"));
            }
        }
        issues
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub p_comp: f64,
    pub p_cs: f64,
    pub p_dt: f64,
    pub total: f64,
}

impl PowerBreakdown {
    pub fn new(p_comp: f64, p_cs: f64, p_dt: f64) -> Self {
        Self {
            p_comp,
            p_cs,
            p_dt,
            total: p_comp + p_cs + p_dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticProfile {
    /// Bits per semantic word unit.
    pub iota: f64,
    pub bleu_floor: f64,
    pub gram_weights: Vec<f64>,
    pub precisions: Vec<f64>,
}

impl SemanticProfile {
    /// Profile whose ratio bound equals `rho_lb`: BLEU floor 0.6, four
    /// uniformly weighted n-gram precisions with the last one solved so the
    /// bound is hit exactly.
    pub fn calibrated(iota: f64, rho_lb: f64) -> Result<Self, LinkError> {
        if !(rho_lb > 0.0 && rho_lb <= 1.0) {
            return Err(LinkError::ProfileShape(format!("target bound {rho_lb} outside (0, 1]")));
        }
        let q: f64 = 0.6;
        let weights = vec![0.25; 4];
        let fixed = [0.9f64, 0.8, 0.7];
        // 1 − ln Q + Σ w ln p = 1/ρ_LB
        let needed = 1.0 / rho_lb - 1.0 + q.ln();
        let partial: f64 = fixed.iter().map(|p| 0.25 * p.ln()).sum();
        let last = ((needed - partial) / 0.25).exp();
        if !(last > 0.0 && last <= 1.0) {
            return Err(LinkError::ProfileShape(format!(
                "no calibrated profile reaches bound {rho_lb}"
            )));
        }
        Ok(Self {
            iota,
            bleu_floor: q,
            gram_weights: weights,
            precisions: vec![fixed[0], fixed[1], fixed[2], last],
        })
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if self.gram_weights.len() != self.precisions.len() {
            return Err(LinkError::ProfileShape("weights and precisions differ in length".into()));
        }
        if self.gram_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(LinkError::ProfileShape("negative n-gram weight".into()));
        }
        if self.precisions.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(LinkError::ProfileShape("precision outside (0, 1]".into()));
        }
        if !(self.bleu_floor > 0.0 && self.bleu_floor <= 1.0) {
            return Err(LinkError::ProfileShape("BLEU floor outside (0, 1]".into()));
        }
        if !(self.iota > 0.0) {
            return Err(LinkError::ProfileShape("iota must be positive".into()));
        }
        Ok(())
    }
}

/// `Σ_k ξ W_k + R` of one RSU.
pub fn signal_covariance(plan: &BeamPlan, rsu: usize) -> CMat {
    let r = &plan.rsus[rsu];
    let mut out = r.sense.clone();
    for k in r.served() {
        out += &r.comm[k];
    }
    hermitian_part(&out)
}

/// Interference-plus-noise matrix seen by vehicle `k`: every other vehicle's
/// communication covariance and every sensing covariance, each through the
/// channel of the RSU emitting it.
pub fn interference_plus_noise(
    k: usize,
    channels: &[Vec<ChannelRealization>],
    plan: &BeamPlan,
    noise_var: f64,
) -> CMat {
    let n_rx = channels[0][k].h.ncols();
    let mut e = cidentity(n_rx).scale(noise_var);
    for (m, rsu) in plan.rsus.iter().enumerate() {
        let h = &channels[m][k].h;
        let mut cov = rsu.sense.clone();
        for j in rsu.served().filter(|&j| j != k) {
            cov += &rsu.comm[j];
        }
        e += h.adjoint() * cov * h;
    }
    hermitian_part(&e)
}

/// `ln det(I + S E⁻¹)` for vehicle `k`, nats; zero when unserved.
pub fn rate_log_det(
    k: usize,
    channels: &[Vec<ChannelRealization>],
    plan: &BeamPlan,
    noise_var: f64,
) -> Result<f64, LinkError> {
    if !(noise_var > 0.0) {
        return Err(LinkError::NonPositiveNoise(noise_var));
    }
    let Some(m) = plan.server_of(k) else {
        return Ok(0.0);
    };
    let h = &channels[m][k].h;
    let signal = h.adjoint() * &plan.rsus[m].comm[k] * h;
    let e_int = interference_plus_noise(k, channels, plan, noise_var);
    let full = hermitian_part(&(&e_int + signal));
    let ld = |x: &CMat| ln_det_hpd(x).ok_or(LinkError::NonPositiveNoise(noise_var));
    Ok((ld(&full)? - ld(&e_int)?).max(0.0))
}

/// Semantic rate of vehicle `k`, bits/s/Hz.
pub fn semantic_rate(
    k: usize,
    channels: &[Vec<ChannelRealization>],
    plan: &BeamPlan,
    iota: f64,
    noise_var: f64,
) -> Result<f64, LinkError> {
    let Some(m) = plan.server_of(k) else {
        return Ok(0.0);
    };
    let rho = plan.rsus[m].rho[k];
    if !(rho > 0.0) {
        return Err(LinkError::NonPositiveRatio(rho));
    }
    let nats = rate_log_det(k, channels, plan, noise_var)?;
    Ok(iota / rho * nats / std::f64::consts::LN_2)
}

/// `1 − ln Q + Σ_g w_g ln p_g`.
pub fn ratio_bound_denominator(profile: &SemanticProfile) -> f64 {
    1.0 - profile.bleu_floor.ln()
        + profile
            .gram_weights
            .iter()
            .zip(&profile.precisions)
            .map(|(w, p)| w * p.ln())
            .sum::<f64>()
}

/// Smallest admissible extraction ratio for a BLEU floor.
pub fn extraction_ratio_lower_bound(profile: &SemanticProfile) -> Result<f64, LinkError> {
    profile.validate()?;
    let denom = ratio_bound_denominator(profile);
    if !(denom >= 1.0) {
        return Err(LinkError::InvalidProfile(denom));
    }
    Ok(1.0 / denom)
}

/// Computing power of semantic extraction at ratios `rho` for the served
/// vehicles, W.
pub fn semantic_compute_power(f_per_nat: f64, rhos: impl IntoIterator<Item = f64>) -> f64 {
    -f_per_nat * rhos.into_iter().map(f64::ln).sum::<f64>()
}

/// DT computing power `κ f³ C`, W.
pub fn dt_power(kappa: f64, freq: f64, cycles_per_bit: f64) -> f64 {
    kappa * freq.powi(3) * cycles_per_bit
}

pub fn power_breakdown(
    plan: &BeamPlan,
    rsu: usize,
    f_per_nat: f64,
    kappa: f64,
    cycles_per_bit: &[f64],
) -> PowerBreakdown {
    let r = &plan.rsus[rsu];
    let p_comp = semantic_compute_power(f_per_nat, r.served().map(|k| r.rho[k]));
    let p_cs = re_trace(&signal_covariance(plan, rsu));
    let p_dt = r
        .cpu_freq
        .iter()
        .zip(cycles_per_bit)
        .map(|(&f, &c)| dt_power(kappa, f, c))
        .sum();
    PowerBreakdown::new(p_comp, p_cs, p_dt)
}

/// Maps an RCRB to DT workload, cycles per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WorkloadShape {
    Linear,
    /// `(e^{a x} − 1) / a`, reducing to the linear map as `a → 0`.
    Exponential { rate: f64 },
}

impl WorkloadShape {
    fn apply(&self, x: f64) -> f64 {
        match *self {
            WorkloadShape::Linear => x,
            WorkloadShape::Exponential { rate } if rate.abs() < 1e-12 => x,
            WorkloadShape::Exponential { rate } => (rate * x).exp_m1() / rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadCoefficients {
    /// Cycles per metre of distance RCRB.
    pub nu_dist: f64,
    /// Cycles per degree of angle RCRB.
    pub nu_angle: f64,
    /// Per-slot offset, cycles.
    pub nu_offset: f64,
    pub shape: WorkloadShape,
}

/// DT workload from the achieved RCRBs, cycles.
pub fn dt_workload(rcrb_dist: f64, rcrb_angle_deg: f64, nu: &WorkloadCoefficients) -> f64 {
    nu.nu_dist * nu.shape.apply(rcrb_dist) + nu.nu_angle * nu.shape.apply(rcrb_angle_deg) + nu.nu_offset
}

/// `(C D + L) / f`, s.
pub fn dt_latency(cycles_per_bit: f64, bits: f64, freq: f64, workload: f64) -> Result<f64, LinkError> {
    if !(freq > 0.0) {
        return Err(LinkError::NonPositiveFrequency(freq));
    }
    Ok((cycles_per_bit * bits + workload) / freq)
}

/// Frequency at which the DT task exactly meets `t_max`, Hz.
pub fn min_cpu_frequency(cycles_per_bit: f64, bits: f64, workload: f64, t_max: f64) -> Result<f64, LinkError> {
    if !(t_max > 0.0) {
        return Err(LinkError::NonPositiveDeadline(t_max));
    }
    Ok((cycles_per_bit * bits + workload) / t_max)
}

//! Assembly and solution of the per-iteration convex program.
//!
//! For fixed auxiliary matrices `A_k`, extraction ratios and CPU frequencies
//! the program chooses communication covariances `W_k` (one per vehicle, at
//! its serving RSU) and one sensing covariance `R_m` per RSU.
//!
//! Rate surrogate, in nats, for vehicle `k` with `E = I + Hᴴ(all)H/σ²`:
//!
//! ```text
//! ln|E| − ln|E_int|  ≥  −ln|A| + N_r − Tr(A⁻¹E⁻¹) − Tr(Hᴴ(int)H)/σ²
//! ```
//!
//! The first inequality is tight at `A = E⁻¹`. The interference log-det is
//! replaced by its tangent at a reference `X₀`,
//!
//! ```text
//! ln|I + X| ≤ ln|I + X₀| + Tr((I + X₀)⁻¹ (X − X₀)),
//! ```
//!
//! which is the low-SNR trace bound `Tr X` at `X₀ = 0` and tight at `X = X₀`.
//! `Tr(A⁻¹E⁻¹) ≤ Tr Z` is imposed through `[Z, Lᴴ; L, E] ⪰ 0` with
//! `A⁻¹ = L Lᴴ`.
//!
//! Sensing enters through `[J₁₁ − Ω, J₁₂; J₁₂ᵀ, J₂₂] ⪰ 0` and
//! `[Ω, eᵢ; eᵢᵀ, tᵢ] ⪰ 0`, so `tᵢ` bounds the i-th CRB. Angles are expressed
//! in degrees here, so the CRB objective adds m² and deg².
//!
//! Covariances are normalized by the power budget and the LMIs are rescaled
//! by diagonal congruences so that the solver sees O(1) data.

use nalgebra::Matrix2;
use num_complex::Complex64;

use super::program::{CAffineMatrix, CExpr, ConicProgram, HermVar, LinExpr, SolverOptions, SymExprMatrix, SymVar};
use crate::channel::ChannelRealization;
use crate::crb::{crb_from_fim, fim, fim_coefficients, FisherBlocks};
use crate::error::SolveError;
use crate::linalg::{cidentity, hermitian_part, inverse_hpd, ln_det_hpd, project_psd, re_trace, CMat};
use crate::link::semantic_compute_power;

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemParams {
    /// Per-RSU power budget, W.
    pub power_budget: f64,
    /// Communication noise variance, W.
    pub noise_comm: f64,
    /// Sensing noise variance, W.
    pub noise_sense: f64,
    /// Snapshots per slot.
    pub t_obs: f64,
    pub iota: f64,
    /// Semantic computing coefficient, W per nat.
    pub semantic_power: f64,
    /// Rate/sensing trade-off weight.
    pub epsilon: f64,
    pub weight_dist: f64,
    pub weight_angle: f64,
    /// Objective weight on normalized total transmit power.
    pub tie_break: f64,
    pub solver: SolverOptions,
}

/// Fixed data of one slot's optimization.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    /// `[rsu][vehicle]`.
    pub channels: &'a [Vec<ChannelRealization>],
    /// `[rsu][vehicle]`.
    pub betas: &'a [Vec<Complex64>],
    /// Serving RSU of each vehicle.
    pub servers: &'a [usize],
    pub params: &'a SubproblemParams,
}

impl Instance<'_> {
    pub fn n_rsu(&self) -> usize {
        self.channels.len()
    }

    pub fn n_vehicles(&self) -> usize {
        self.servers.len()
    }

    pub fn n_tx(&self) -> usize {
        self.channels[0][0].h.nrows()
    }

    pub fn n_rx(&self) -> usize {
        self.channels[0][0].h.ncols()
    }

    pub fn served_by(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.servers.iter().enumerate().filter(move |(_, &s)| s == m).map(|(k, _)| k)
    }

    pub fn n_served(&self, m: usize) -> usize {
        self.served_by(m).count()
    }

    fn sensing_active(&self) -> bool {
        let p = self.params;
        (1.0 - p.epsilon) * (p.weight_dist + p.weight_angle) > 0.0
    }
}

/// Quantities held fixed during one conic solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    /// Auxiliary matrix per vehicle, `n_rx × n_rx`.
    pub aux: Vec<CMat>,
    /// Linearization point `X₀ = Hᴴ(interference)H/σ²` per vehicle.
    pub tangent: Vec<CMat>,
    /// Common extraction ratio per RSU.
    pub rho: Vec<f64>,
    /// DT computing power per RSU, W.
    pub p_dt: Vec<f64>,
}

impl Iterate {
    pub fn initial(inst: &Instance, rho: f64, p_dt: Vec<f64>) -> Self {
        Self {
            aux: vec![cidentity(inst.n_rx()); inst.n_vehicles()],
            tangent: vec![CMat::zeros(inst.n_rx(), inst.n_rx()); inst.n_vehicles()],
            rho: vec![rho; inst.n_rsu()],
            p_dt,
        }
    }

    /// Power left for transmission at RSU `m`, W.
    pub fn transmit_budget(&self, inst: &Instance, m: usize) -> f64 {
        let p = inst.params;
        let p_comp = semantic_compute_power(p.semantic_power, inst.served_by(m).map(|_| self.rho[m]));
        p.power_budget - p_comp - self.p_dt[m]
    }
}

/// Covariances chosen by the program.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariances {
    /// Per vehicle, at its serving RSU.
    pub comm: Vec<CMat>,
    /// Per RSU.
    pub sense: Vec<CMat>,
}

impl Covariances {
    pub fn zeros(inst: &Instance) -> Self {
        let n = inst.n_tx();
        Self {
            comm: vec![CMat::zeros(n, n); inst.n_vehicles()],
            sense: vec![CMat::zeros(n, n); inst.n_rsu()],
        }
    }

    /// Transmit covariance of RSU `m`.
    pub fn transmit(&self, inst: &Instance, m: usize) -> CMat {
        let mut out = self.sense[m].clone();
        for k in inst.served_by(m) {
            out += &self.comm[k];
        }
        out
    }

    pub fn total_power(&self, inst: &Instance, m: usize) -> f64 {
        re_trace(&self.transmit(inst, m))
    }
}

/// `Σ_m Hᴴ (covariance) H` at vehicle `k`, optionally without its own beam.
fn received(inst: &Instance, cov: &Covariances, k: usize, include_own: bool) -> CMat {
    let n_rx = inst.n_rx();
    let mut out = CMat::zeros(n_rx, n_rx);
    for m in 0..inst.n_rsu() {
        let h = &inst.channels[m][k].h;
        let mut x = cov.sense[m].clone();
        for j in inst.served_by(m) {
            if j != k || include_own {
                x += &cov.comm[j];
            }
        }
        out += h.adjoint() * x * h;
    }
    hermitian_part(&out)
}

/// `E = I + Σ_m Hᴴ(all)H / σ²` at vehicle `k`.
pub fn full_covariance_matrix(inst: &Instance, cov: &Covariances, k: usize) -> CMat {
    cidentity(inst.n_rx()) + received(inst, cov, k, true).scale(1.0 / inst.params.noise_comm)
}

/// Closed-form minimizer `A = E⁻¹` of `Tr(A E) − ln|A|`.
pub fn mmse_auxiliary_update(inst: &Instance, cov: &Covariances) -> Vec<CMat> {
    (0..inst.n_vehicles())
        .map(|k| {
            let e = full_covariance_matrix(inst, cov, k);
            inverse_hpd(&e).unwrap_or_else(|| cidentity(inst.n_rx()))
        })
        .collect()
}

/// Normalized interference `Hᴴ(interference)H/σ²` at every vehicle, the
/// point at which the next program linearizes the interference log-det.
pub fn interference_tangent_update(inst: &Instance, cov: &Covariances) -> Vec<CMat> {
    (0..inst.n_vehicles())
        .map(|k| received(inst, cov, k, false).scale(1.0 / inst.params.noise_comm))
        .collect()
}

/// `(ln|I + X₀| − Tr(B X₀), B)` with `B = (I + X₀)⁻¹`, so that the tangent
/// bound reads `constant + Tr(B X)`.
fn tangent_terms(x0: &CMat) -> (f64, CMat) {
    let n = x0.nrows();
    let shifted = cidentity(n) + x0;
    let b = inverse_hpd(&shifted).unwrap_or_else(|| cidentity(n));
    let constant = ln_det_hpd(&shifted).unwrap_or(0.0) - re_trace(&(&b * x0));
    (constant, b)
}

/// Rate surrogate of vehicle `k` in bits/s/Hz.
pub fn rate_surrogate(inst: &Instance, it: &Iterate, cov: &Covariances, k: usize) -> f64 {
    let p = inst.params;
    let n_rx = inst.n_rx() as f64;
    let e = full_covariance_matrix(inst, cov, k);
    let a = &it.aux[k];
    let a_inv = inverse_hpd(a).unwrap_or_else(|| cidentity(inst.n_rx()));
    let e_inv = inverse_hpd(&e).unwrap_or_else(|| cidentity(inst.n_rx()));
    let ln_a = ln_det_hpd(a).unwrap_or(0.0);
    let (constant, b) = tangent_terms(&it.tangent[k]);
    let x = received(inst, cov, k, false).scale(1.0 / p.noise_comm);
    let interference = constant + re_trace(&(b * x));
    let bracket = -ln_a + n_rx - re_trace(&(a_inv * e_inv)) - interference;
    let rho = it.rho[inst.servers[k]];
    p.iota / (rho * std::f64::consts::LN_2) * bracket
}

/// Fisher blocks of pair `(m, k)` with the angle parameter in degrees.
pub fn fim_in_degrees(inst: &Instance, cov: &Covariances, m: usize, k: usize) -> FisherBlocks {
    let p = inst.params;
    let rx = cov.transmit(inst, m);
    to_degrees(fim(&inst.channels[m][k], inst.betas[m][k], &rx, p.t_obs, p.noise_sense))
}

fn to_degrees(mut b: FisherBlocks) -> FisherBlocks {
    let d = Matrix2::new(1.0, 0.0, 0.0, DEG);
    b.j11 = d * b.j11 * d;
    b.j12 = d * b.j12;
    b
}

/// `w_d CRB_d + w_θ CRB_θ` (m², deg²) of pair `(m, k)`.
pub fn weighted_crb(inst: &Instance, cov: &Covariances, m: usize, k: usize) -> f64 {
    let p = inst.params;
    let r = crb_from_fim(&fim_in_degrees(inst, cov, m, k));
    let mut out = 0.0;
    if p.weight_dist > 0.0 {
        out += p.weight_dist * r.crb_dist;
    }
    if p.weight_angle > 0.0 {
        out += p.weight_angle * r.crb_angle;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveParts {
    /// Per vehicle, bits/s/Hz.
    pub rates: Vec<f64>,
    /// `[rsu][vehicle]`.
    pub crb_terms: Vec<Vec<f64>>,
    pub power_term: f64,
    pub value: f64,
}

fn assemble(inst: &Instance, rates: Vec<f64>, cov: &Covariances) -> ObjectiveParts {
    let p = inst.params;
    let crb_terms: Vec<Vec<f64>> = if inst.sensing_active() {
        (0..inst.n_rsu())
            .map(|m| (0..inst.n_vehicles()).map(|k| weighted_crb(inst, cov, m, k)).collect())
            .collect()
    } else {
        vec![vec![0.0; inst.n_vehicles()]; inst.n_rsu()]
    };
    let power_term = p.tie_break * (0..inst.n_rsu()).map(|m| cov.total_power(inst, m)).sum::<f64>() / p.power_budget;
    let crb_sum: f64 = crb_terms.iter().flatten().sum();
    let value = -p.epsilon * rates.iter().sum::<f64>() + (1.0 - p.epsilon) * crb_sum + power_term;
    ObjectiveParts {
        rates,
        crb_terms,
        power_term,
        value,
    }
}

/// Objective tracked by the alternating optimization: rate surrogate at the
/// current auxiliaries plus exact CRBs.
pub fn surrogate_objective(inst: &Instance, it: &Iterate, cov: &Covariances) -> ObjectiveParts {
    let rates = (0..inst.n_vehicles()).map(|k| rate_surrogate(inst, it, cov, k)).collect();
    assemble(inst, rates, cov)
}

/// Objective with exact semantic rates.
pub fn true_objective(inst: &Instance, rho: &[f64], cov: &Covariances) -> ObjectiveParts {
    let rates = (0..inst.n_vehicles()).map(|k| true_rate(inst, rho, cov, k)).collect();
    assemble(inst, rates, cov)
}

/// Exact semantic rate of vehicle `k`, bits/s/Hz.
pub fn true_rate(inst: &Instance, rho: &[f64], cov: &Covariances, k: usize) -> f64 {
    let p = inst.params;
    let n = inst.n_rx();
    let full = cidentity(n) + received(inst, cov, k, true).scale(1.0 / p.noise_comm);
    let int = cidentity(n) + received(inst, cov, k, false).scale(1.0 / p.noise_comm);
    let nats = (ln_det_hpd(&full).unwrap_or(0.0) - ln_det_hpd(&int).unwrap_or(0.0)).max(0.0);
    p.iota / rho[inst.servers[k]] * nats / std::f64::consts::LN_2
}

/// Same pose CRB, better conditioned LMI: re-expressing the reflection
/// coefficient as `β̃ g(θ, d)` with `∂g/∂a = −γ_a` at the current pose turns
/// `Ḃ_a` into `Ḃ_a − γ_a B`. The Jacobian of that change of variables is
/// the identity on the pose block, so the pose block of the inverse FIM is
/// unchanged. `γ_a` removes the component of `Ḃ_a` along `B`, which in the
/// far field is most of it.
pub fn decorrelated(ch: &ChannelRealization) -> ChannelRealization {
    let norm = ch.b.norm_squared();
    if norm == 0.0 {
        return ch.clone();
    }
    let project = |d: &CMat| {
        let gamma = crate::linalg::trace_of_product(d, &ch.b.adjoint()) / norm;
        d - ch.b.map(|z| z * gamma)
    };
    ChannelRealization {
        h: ch.h.clone(),
        b: ch.b.clone(),
        db_dtheta: project(&ch.db_dtheta),
        db_ddist: project(&ch.db_ddist),
    }
}

/// Variable handles and scalings needed to read a solution back.
#[derive(Debug, Clone)]
pub struct Layout {
    comm: Vec<HermVar>,
    sense: Vec<HermVar>,
    rate: Vec<usize>,
    /// `[rsu][vehicle]`: (Ω̃, t̃₁, t̃₂, (s_d, s_θ)).
    crb: Vec<Vec<Option<CrbVars>>>,
    aux_z: Vec<HermVar>,
    power_unit: f64,
}

#[derive(Debug, Clone, Copy)]
struct CrbVars {
    omega: SymVar,
    t: [usize; 2],
    scale: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub cov: Covariances,
    /// Per vehicle, bits/s/Hz.
    pub rate_epigraph: Vec<f64>,
    /// `[rsu][vehicle]`, `w_d t₁ + w_θ t₂`.
    pub crb_epigraph: Vec<Vec<f64>>,
    /// `[rsu][vehicle]` in (m, deg) units.
    pub omega: Vec<Vec<Matrix2<f64>>>,
    /// `[rsu][vehicle]` CRB epigraph pair (m², deg²).
    pub t: Vec<Vec<[f64; 2]>>,
    pub objective: f64,
    pub iterations: u32,
    pub reduced_accuracy: bool,
}

fn hermitian_sum_trace_product(vars: &[HermVar], m: &CMat, scale: f64) -> CExpr {
    let mut out = CExpr::default();
    for v in vars {
        out.add_scaled(&v.trace_product(m), Complex64::new(scale, 0.0));
    }
    out
}

/// Builds the conic program. Fails early when an RSU's fixed computing
/// power already exhausts its budget.
pub fn build_subproblem(inst: &Instance, it: &Iterate) -> Result<(ConicProgram, Layout), SolveError> {
    let p = inst.params;
    let n_tx = inst.n_tx();
    let n_rx = inst.n_rx();
    let n_rsu = inst.n_rsu();
    let n_veh = inst.n_vehicles();
    if inst.servers.iter().any(|&m| m >= n_rsu) {
        return Err(SolveError::Malformed("serving RSU index out of range".into()));
    }
    let budgets: Vec<f64> = (0..n_rsu).map(|m| it.transmit_budget(inst, m)).collect();
    for (m, &b) in budgets.iter().enumerate() {
        if !(b > 0.0) {
            return Err(SolveError::BudgetExhausted { rsu: m, budget: b });
        }
    }
    let unit = p.power_budget;

    let mut prog = ConicProgram::new();
    let comm: Vec<HermVar> = (0..n_veh).map(|k| prog.add_hermitian(&format!("W[{k}]"), n_tx, true)).collect();
    let sense: Vec<HermVar> = (0..n_rsu).map(|m| prog.add_hermitian(&format!("R[{m}]"), n_tx, true)).collect();
    // Transmit covariance per RSU, tied to its parts by equalities so that
    // each LMI entry touches n_tx² variables instead of every beam.
    let total: Vec<HermVar> = (0..n_rsu).map(|m| prog.add_hermitian(&format!("T[{m}]"), n_tx, false)).collect();
    for (m, t) in total.iter().enumerate() {
        let parts: Vec<HermVar> = inst.served_by(m).map(|k| comm[k]).chain([sense[m]]).collect();
        for i in 0..t.len() {
            let mut e = LinExpr::var(t.offset + i);
            for v in &parts {
                e.add_term(v.offset + i, -1.0);
            }
            prog.add_eq(&format!("transmit[{m},{i}]"), e);
        }
    }

    let mut objective = LinExpr::zero();
    for m in 0..n_rsu {
        let tr = total[m].trace();
        objective.add_scaled(&tr, p.tie_break);
        prog.add_le(&format!("power[{m}]"), tr, LinExpr::constant(budgets[m] / unit));
    }

    // Rate epigraphs.
    let mut rate = Vec::with_capacity(n_veh);
    let mut aux_z = Vec::with_capacity(n_veh);
    for k in 0..n_veh {
        let eta = prog.add_free(&format!("etaS[{k}]"));
        let z = prog.add_hermitian(&format!("Z[{k}]"), n_rx, false);
        rate.push(eta);
        aux_z.push(z);
        objective.add_term(eta, -p.epsilon);

        let a = &it.aux[k];
        let a_inv = inverse_hpd(a).ok_or_else(|| SolveError::Malformed(format!("auxiliary {k} not positive definite")))?;
        let l = a_inv
            .clone()
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| SolveError::Malformed(format!("auxiliary {k} not positive definite")))?;
        let ln_a = ln_det_hpd(a).unwrap_or(0.0);
        let e_scale = a_inv.diagonal().iter().map(|z| z.re).fold(1.0, f64::max);

        // E / e_scale as an affine matrix.
        let mut e_mat = CAffineMatrix::constant(&cidentity(n_rx).scale(1.0 / e_scale));
        let (tangent_const, tangent_b) = tangent_terms(&it.tangent[k]);
        let mut interference = LinExpr::constant(tangent_const);
        let coef = unit / (p.noise_comm * e_scale);
        for m in 0..n_rsu {
            let h = &inst.channels[m][k].h;
            let vars = [total[m]];
            for a_idx in 0..n_rx {
                for b_idx in a_idx..n_rx {
                    let mm = h.column(b_idx) * h.column(a_idx).adjoint();
                    let add = hermitian_sum_trace_product(&vars, &mm, coef);
                    e_mat.at_mut(a_idx, b_idx).add_scaled(&add, Complex64::new(1.0, 0.0));
                    if a_idx != b_idx {
                        let conj = add.conj();
                        e_mat.at_mut(b_idx, a_idx).add_scaled(&conj, Complex64::new(1.0, 0.0));
                    }
                }
            }
            let hh = h * &tangent_b * h.adjoint();
            interference.add_scaled(&total[m].real_trace_product(&hh), unit / p.noise_comm);
            if inst.servers[k] == m {
                interference.add_scaled(&comm[k].real_trace_product(&hh), -unit / p.noise_comm);
            }
        }
        // [Z, Lᴴ/√e; L/√e, E/e] ⪰ 0
        let mut lmi = CAffineMatrix::zeros(2 * n_rx);
        let zm = z.as_matrix();
        let s = 1.0 / e_scale.sqrt();
        for i in 0..n_rx {
            for j in 0..n_rx {
                *lmi.at_mut(i, j) = zm.at(i, j).clone();
                *lmi.at_mut(i + n_rx, j + n_rx) = e_mat.at(i, j).clone();
                *lmi.at_mut(i + n_rx, j) = CExpr::constant(l[(i, j)] * s);
                *lmi.at_mut(j, i + n_rx) = CExpr::constant(l[(i, j)].conj() * s);
            }
        }
        prog.add_psd_hermitian(&format!("rate lmi[{k}]"), &lmi);

        // η_S ≤ c (−ln|A| + N_r − Tr Z − tangent bound)
        let c = p.iota / (it.rho[inst.servers[k]] * std::f64::consts::LN_2);
        let mut bracket = LinExpr::constant(-ln_a + n_rx as f64);
        bracket -= z.trace();
        bracket -= interference;
        prog.add_le(&format!("rate epigraph[{k}]"), LinExpr::var(eta), bracket.scaled(c));
    }

    // CRB epigraphs.
    let mut crb = vec![vec![None; n_veh]; n_rsu];
    if inst.sensing_active() {
        for m in 0..n_rsu {
            let vars = [total[m]];
            let reference = cidentity(n_tx).scale(budgets[m] / n_tx as f64);
            for k in 0..n_veh {
                let ch = decorrelated(&inst.channels[m][k]);
                let coeff = fim_coefficients(&ch, inst.betas[m][k], p.t_obs, p.noise_sense);
                let ref_blocks = to_degrees(coeff.contract(&reference));
                let sd = ref_blocks.j11[(0, 0)].sqrt();
                let sa = ref_blocks.j11[(1, 1)].sqrt();
                let c22 = ref_blocks.j22[(0, 0)];
                let scale = [if sd > 0.0 { sd } else { 1.0 }, if sa > 0.0 { sa } else { 1.0 }];
                let c22 = if c22 > 0.0 { c22 } else { 1.0 };
                let deg = [1.0, DEG];
                let entry = |g: &CMat, f: f64| -> LinExpr {
                    let mut e = LinExpr::zero();
                    for v in &vars {
                        e.add_scaled(&v.real_trace_product(g), unit * f);
                    }
                    e
                };
                let t1 = prog.add_free(&format!("t_dist[{m},{k}]"));
                let t2 = prog.add_free(&format!("t_angle[{m},{k}]"));
                let mut fisher = SymExprMatrix::zeros(4);
                for a in 0..2 {
                    for b in a..2 {
                        let f = deg[a] * deg[b] / (scale[a] * scale[b]);
                        fisher.set(a, b, entry(&coeff.j11[a][b], f));
                    }
                    for b in 0..2 {
                        let f = deg[a] / (scale[a] * c22.sqrt());
                        fisher.set(a, b + 2, entry(&coeff.j12[a][b], f));
                    }
                }
                let j22 = entry(&coeff.j22, 1.0 / c22);
                fisher.set(2, 2, j22.clone());
                fisher.set(3, 3, j22);
                let omega = prog.add_symmetric(&format!("Omega[{m},{k}]"), 2);
                let mut lmi = fisher;
                for a in 0..2 {
                    for b in a..2 {
                        *lmi.get_mut(a, b) -= omega.entry(a, b);
                    }
                }
                prog.add_psd(&format!("crb lmi[{m},{k}]"), lmi);
                for (i, t) in [t1, t2].into_iter().enumerate() {
                    let mut e = SymExprMatrix::zeros(3);
                    e.set(0, 0, omega.entry(0, 0));
                    e.set(0, 1, omega.entry(0, 1));
                    e.set(1, 1, omega.entry(1, 1));
                    e.set(i, 2, LinExpr::constant(1.0));
                    e.set(2, 2, LinExpr::var(t));
                    prog.add_psd(&format!("crb epigraph[{m},{k},{i}]"), e);
                }
                objective.add_term(t1, (1.0 - p.epsilon) * p.weight_dist / (scale[0] * scale[0]));
                objective.add_term(t2, (1.0 - p.epsilon) * p.weight_angle / (scale[1] * scale[1]));
                crb[m][k] = Some(CrbVars { omega, t: [t1, t2], scale });
            }
        }
    }
    prog.set_objective(objective);
    Ok((
        prog,
        Layout {
            comm,
            sense,
            rate,
            crb,
            aux_z,
            power_unit: unit,
        },
    ))
}

/// Solves a program produced by [`build_subproblem`] and maps the solution
/// back to physical units. Covariances are projected onto the PSD cone to
/// remove solver round-off.
pub fn solve_subproblem(
    prog: &ConicProgram,
    layout: &Layout,
    inst: &Instance,
) -> Result<SubproblemSolution, SolveError> {
    let p = inst.params;
    let sol = prog.solve(&p.solver)?;
    let x = &sol.x;
    let unit = layout.power_unit;
    let read = |v: &HermVar| project_psd(&v.value(x)).scale(unit);
    let cov = Covariances {
        comm: layout.comm.iter().map(read).collect(),
        sense: layout.sense.iter().map(read).collect(),
    };
    let rate_epigraph = layout.rate.iter().map(|&i| x[i]).collect();
    let n_veh = inst.n_vehicles();
    let mut crb_epigraph = vec![vec![0.0; n_veh]; inst.n_rsu()];
    let mut omega = vec![vec![Matrix2::zeros(); n_veh]; inst.n_rsu()];
    let mut t = vec![vec![[0.0; 2]; n_veh]; inst.n_rsu()];
    for (m, row) in layout.crb.iter().enumerate() {
        for (k, vars) in row.iter().enumerate() {
            if let Some(v) = vars {
                let s = Matrix2::new(v.scale[0], 0.0, 0.0, v.scale[1]);
                let o = v.omega.value(x);
                omega[m][k] = s * Matrix2::new(o[(0, 0)], o[(0, 1)], o[(1, 0)], o[(1, 1)]) * s;
                let t1 = x[v.t[0]] / (v.scale[0] * v.scale[0]);
                let t2 = x[v.t[1]] / (v.scale[1] * v.scale[1]);
                t[m][k] = [t1, t2];
                crb_epigraph[m][k] = p.weight_dist * t1 + p.weight_angle * t2;
            }
        }
    }
    let _ = &layout.aux_z;
    Ok(SubproblemSolution {
        cov,
        rate_epigraph,
        crb_epigraph,
        omega,
        t,
        objective: sol.objective,
        iterations: sol.iterations,
        reduced_accuracy: sol.reduced_accuracy,
    })
}

impl Layout {
    pub fn comm_vars(&self) -> &[HermVar] {
        &self.comm
    }

    pub fn sense_vars(&self) -> &[HermVar] {
        &self.sense
    }

    pub fn rate_vars(&self) -> &[usize] {
        &self.rate
    }

    pub fn aux_vars(&self) -> &[HermVar] {
        &self.aux_z
    }

    pub fn power_unit(&self) -> f64 {
        self.power_unit
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{realize, ArrayGeometry, Pose};
    use crate::crb::crb_from_fim;
    use crate::linalg::{outer, CVec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(epsilon: f64) -> SubproblemParams {
        SubproblemParams {
            power_budget: 0.316,
            noise_comm: 1e-6,
            noise_sense: 1e-6,
            t_obs: 64.0,
            iota: 1.1,
            semantic_power: 0.01,
            epsilon,
            weight_dist: 0.5,
            weight_angle: 0.5,
            tie_break: 1e-8,
            solver: SolverOptions::default(),
        }
    }

    fn channels(n_tx: usize, n_rx: usize, poses: &[Vec<(f64, f64)>]) -> Vec<Vec<ChannelRealization>> {
        let geom = ArrayGeometry::half_wavelength(n_tx, n_rx, 50e9);
        poses
            .iter()
            .map(|row| row.iter().map(|&(a, d)| realize(&Pose::new(a, d).unwrap(), &geom).unwrap()).collect())
            .collect()
    }

    fn unit_betas(m: usize, k: usize) -> Vec<Vec<Complex64>> {
        vec![vec![Complex64::new(1.0, 0.0); k]; m]
    }

    fn random_psd(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> CMat {
        let mut out = CMat::zeros(n, n);
        for _ in 0..n {
            let v = CVec::from_fn(n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            out += outer(&v);
        }
        let tr = re_trace(&out);
        out.scale(scale / tr)
    }

    #[test]
    fn single_vehicle_program_has_expected_shape() {
        let ch = channels(2, 1, &[vec![(1.2, 20.0)]]);
        let betas = unit_betas(1, 1);
        let p = params(0.5);
        let inst = Instance { channels: &ch, betas: &betas, servers: &[0], params: &p };
        let it = Iterate::initial(&inst, 0.9, vec![0.0]);
        let (prog, _) = build_subproblem(&inst, &it).unwrap();
        // W, R, T: 4 each; Z: 1; η: 1; Ω: 3; t: 2.
        assert_eq!(prog.n_vars, 19);
        // W, R, rate LMI, CRB LMI, two epigraph blocks.
        assert_eq!(prog.psd.len(), 6);
        let sizes: Vec<usize> = prog.psd.iter().map(|c| c.matrix.n).collect();
        // The 1×1 Hermitian rate LMI is realified to 4×4.
        assert_eq!(sizes, vec![4, 4, 4, 4, 3, 3]);
        // power and rate epigraph.
        assert_eq!(prog.inequalities.len(), 2);
        // T = W + R entrywise.
        assert_eq!(prog.equalities.len(), 4);
    }

    #[test]
    fn zero_channels_give_the_trivial_optimum() {
        let n = 3;
        let zero = ChannelRealization {
            h: CMat::zeros(n, 1),
            b: CMat::zeros(n, n),
            db_dtheta: CMat::zeros(n, n),
            db_ddist: CMat::zeros(n, n),
        };
        let ch = vec![vec![zero.clone(), zero]];
        let betas = unit_betas(1, 2);
        let p = SubproblemParams { tie_break: 1.0, ..params(1.0) };
        let inst = Instance { channels: &ch, betas: &betas, servers: &[0, 0], params: &p };
        let it = Iterate::initial(&inst, 0.9, vec![0.0]);
        let (prog, layout) = build_subproblem(&inst, &it).unwrap();
        let sol = solve_subproblem(&prog, &layout, &inst).unwrap();
        for w in sol.cov.comm.iter().chain(&sol.cov.sense) {
            assert!(re_trace(w) < 1e-6 * p.power_budget);
        }
        assert!(sol.rate_epigraph.iter().all(|r| r.abs() < 1e-6));
    }

    #[test]
    fn surrogate_is_a_tight_minorant_of_the_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ch = channels(4, 2, &[vec![(1.1, 18.0), (1.9, 25.0)], vec![(0.6, 30.0), (1.3, 12.0)]]);
        let betas = unit_betas(2, 2);
        let p = params(0.5);
        let inst = Instance { channels: &ch, betas: &betas, servers: &[0, 1], params: &p };
        for _ in 0..20 {
            let cov = Covariances {
                comm: (0..2).map(|_| random_psd(4, 0.1, &mut rng)).collect(),
                sense: (0..2).map(|_| random_psd(4, 0.05, &mut rng)).collect(),
            };
            let mut it = Iterate::initial(&inst, 0.85, vec![0.0, 0.0]);
            for k in 0..2 {
                let exact = true_rate(&inst, &it.rho, &cov, k);
                let loose = rate_surrogate(&inst, &it, &cov, k);
                assert!(loose <= exact + 1e-9 * exact.abs().max(1.0));
            }
            it.aux = mmse_auxiliary_update(&inst, &cov);
            for k in 0..2 {
                // Only the interference linearization remains loose.
                let exact = true_rate(&inst, &it.rho, &cov, k);
                let loose = rate_surrogate(&inst, &it, &cov, k);
                assert!(loose <= exact + 1e-9 * exact.abs().max(1.0));
            }
            it.tangent = interference_tangent_update(&inst, &cov);
            for k in 0..2 {
                let exact = true_rate(&inst, &it.rho, &cov, k);
                let tight = rate_surrogate(&inst, &it, &cov, k);
                assert!((exact - tight).abs() < 1e-8 * exact.abs().max(1.0), "{exact} {tight}");
            }
        }
    }

    #[test]
    fn solution_respects_epigraphs_and_budget() {
        let ch = channels(4, 2, &[vec![(1.1, 18.0), (1.9, 25.0)]]);
        let betas = unit_betas(1, 2);
        let p = params(0.5);
        let inst = Instance { channels: &ch, betas: &betas, servers: &[0, 0], params: &p };
        let it = Iterate::initial(&inst, 0.9, vec![0.01]);
        let (prog, layout) = build_subproblem(&inst, &it).unwrap();
        let sol = solve_subproblem(&prog, &layout, &inst).unwrap();
        let budget = it.transmit_budget(&inst, 0);
        assert!(sol.cov.total_power(&inst, 0) <= budget * (1.0 + 1e-6));
        for k in 0..2 {
            let s = rate_surrogate(&inst, &it, &sol.cov, k);
            assert!(sol.rate_epigraph[k] <= s + 1e-5 * s.abs().max(1.0), "{} {s}", sol.rate_epigraph[k]);
            let crb = crb_from_fim(&fim_in_degrees(&inst, &sol.cov, 0, k));
            let t = sol.t[0][k];
            assert!(t[0] >= crb.crb_dist * (1.0 - 1e-4), "{t:?} {crb:?}");
            assert!(t[1] >= crb.crb_angle * (1.0 - 1e-4), "{t:?} {crb:?}");
            let inv = sol.omega[0][k].try_inverse().unwrap();
            assert!(t[0] + t[1] >= inv.trace() * (1.0 - 1e-4));
        }
        for w in sol.cov.comm.iter().chain(&sol.cov.sense) {
            assert!(crate::linalg::min_eigenvalue(w) >= -1e-12);
        }
    }

    #[test]
    fn program_is_invariant_to_vehicle_relabelling() {
        let ch = channels(3, 1, &[vec![(1.1, 18.0), (1.9, 25.0)]]);
        let swapped: Vec<Vec<ChannelRealization>> = vec![vec![ch[0][1].clone(), ch[0][0].clone()]];
        let betas = unit_betas(1, 2);
        let p = params(0.5);
        let solve = |c: &Vec<Vec<ChannelRealization>>| {
            let inst = Instance { channels: c, betas: &betas, servers: &[0, 0], params: &p };
            let it = Iterate::initial(&inst, 0.9, vec![0.0]);
            let (prog, layout) = build_subproblem(&inst, &it).unwrap();
            solve_subproblem(&prog, &layout, &inst).unwrap()
        };
        let a = solve(&ch);
        let b = solve(&swapped);
        assert!((a.objective - b.objective).abs() < 1e-5 * a.objective.abs().max(1.0));
        assert!((a.rate_epigraph[0] - b.rate_epigraph[1]).abs() < 1e-3 * a.rate_epigraph[0].abs().max(1.0));
    }

    #[test]
    fn decorrelation_leaves_the_pose_crb_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ch = channels(6, 2, &[vec![(0.9, 14.0), (2.2, 60.0)]]);
        for c in &ch[0] {
            let d = decorrelated(c);
            for _ in 0..10 {
                let r = random_psd(6, 0.3, &mut rng);
                let beta = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let a = crb_from_fim(&fim(c, beta, &r, 32.0, 1e-6));
                let b = crb_from_fim(&fim(&d, beta, &r, 32.0, 1e-6));
                assert!((a.crb_dist - b.crb_dist).abs() < 1e-6 * a.crb_dist, "{a:?} {b:?}");
                assert!((a.crb_angle - b.crb_angle).abs() < 1e-6 * a.crb_angle, "{a:?} {b:?}");
            }
            assert!(crate::linalg::trace_of_product(&d.db_ddist, &d.b.adjoint()).norm() < 1e-9 * d.db_ddist.norm() * d.b.norm());
        }
    }

    #[test]
    fn exhausted_budget_is_reported_before_solving() {
        let ch = channels(2, 1, &[vec![(1.2, 20.0)]]);
        let betas = unit_betas(1, 1);
        let p = params(0.5);
        let inst = Instance { channels: &ch, betas: &betas, servers: &[0], params: &p };
        let it = Iterate::initial(&inst, 0.9, vec![0.5]);
        assert!(matches!(build_subproblem(&inst, &it), Err(SolveError::BudgetExhausted { rsu: 0, .. })));
    }

    #[test]
    fn objective_parts_add_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = channels(3, 2, &[vec![(1.1, 18.0), (1.9, 25.0)]]);
        let betas = unit_betas(1, 2);
        let p = params(0.3);
        let inst = Instance { channels: &ch, betas: &betas, servers: &[0, 0], params: &p };
        let cov = Covariances {
            comm: (0..2).map(|_| random_psd(3, 0.1, &mut rng)).collect(),
            sense: vec![random_psd(3, 0.1, &mut rng)],
        };
        let parts = true_objective(&inst, &[0.9], &cov);
        let want = -0.3 * parts.rates.iter().sum::<f64>()
            + 0.7 * parts.crb_terms.iter().flatten().sum::<f64>()
            + 1e-8 * 0.3 / 0.316;
        assert!((parts.value - want).abs() < 1e-9 * want.abs().max(1.0));
    }
}

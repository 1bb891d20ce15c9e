//! Extraction-ratio line search for one RSU with fixed beams and CPU power.

use crate::error::SolveError;

/// Default bracket width of [`bisect_extraction_ratio`].
pub const RATIO_TOL: f64 = 1e-6;

/// Relative overrun at `ρ = 1` still treated as feasible.
pub const BUDGET_SLACK: f64 = 1e-9;

/// Smallest common extraction ratio `ρ ∈ [ρ_LB, 1]` whose total power
/// `−F n ln ρ + other` stays within `budget`. Semantic rates fall with `ρ`,
/// so the smallest feasible ratio is optimal for fixed beams.
///
/// Returns `Infeasible` when even `ρ = 1` overruns the budget.
pub fn bisect_extraction_ratio(
    other_power: f64,
    f_per_nat: f64,
    n_served: usize,
    rho_lb: f64,
    budget: f64,
    tol: f64,
) -> Result<f64, SolveError> {
    if !(rho_lb > 0.0 && rho_lb <= 1.0) || !(tol > 0.0) {
        return Err(SolveError::Malformed(format!("bad ratio bracket [{rho_lb}, 1] or tol {tol}")));
    }
    let power = |rho: f64| -f_per_nat * n_served as f64 * rho.ln() + other_power;
    // Solver round-off can leave the fixed costs a few ulps over budget.
    if power(1.0) > budget * (1.0 + BUDGET_SLACK) {
        return Err(SolveError::Infeasible);
    }
    if n_served == 0 || f_per_nat == 0.0 || power(rho_lb) <= budget {
        return Ok(rho_lb);
    }
    let (mut lo, mut hi) = (rho_lb, 1.0);
    while hi - lo > 0.1 * tol {
        let mid = 0.5 * (lo + hi);
        if power(mid) <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

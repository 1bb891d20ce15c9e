//! Rank-one recovery from a relaxed covariance by Gaussian randomization.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{hermitian_eigen, re_trace, CMat, CVec};

/// Beamformer with `‖w‖² = Tr(W)` along the principal eigenvector of `W`.
pub fn principal_beam(w: &CMat) -> CVec {
    let (vals, vecs) = hermitian_eigen(w);
    let n = w.nrows();
    let Some((idx, _)) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) else {
        return CVec::zeros(n);
    };
    let power = re_trace(w).max(0.0);
    vecs.column(idx).into_owned() * Complex64::new(power.sqrt(), 0.0)
}

/// Draws `n_samples` candidates `w = U Λ^{1/2} ζ`, `ζ ~ CN(0, I)`, rescaled to
/// the power of `W`, and returns the one with the lowest score. `score`
/// returns `None` for infeasible candidates. The principal eigenvector is
/// scored first and kept when no sample improves on it.
pub fn gaussian_randomization<R, F>(w: &CMat, n_samples: usize, rng: &mut R, mut score: F) -> CVec
where
    R: Rng + ?Sized,
    F: FnMut(&CVec) -> Option<f64>,
{
    let n = w.nrows();
    let power = re_trace(w).max(0.0);
    let principal = principal_beam(w);
    if power == 0.0 {
        return principal;
    }
    let (vals, vecs) = hermitian_eigen(w);
    let sqrt_vals: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut best = principal.clone();
    let mut best_score = score(&principal).unwrap_or(f64::INFINITY);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..n_samples {
        let mut cand = CVec::zeros(n);
        for (j, &sv) in sqrt_vals.iter().enumerate() {
            if sv == 0.0 {
                continue;
            }
            let z = Complex64::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal));
            cand += vecs.column(j) * (z * sv);
        }
        let norm = cand.norm();
        if norm == 0.0 {
            continue;
        }
        cand *= Complex64::new(power.sqrt() / norm, 0.0);
        if let Some(v) = score(&cand) {
            if v < best_score {
                best_score = v;
                best = cand;
            }
        }
    }
    best
}

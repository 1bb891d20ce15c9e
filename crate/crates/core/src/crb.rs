//! Fisher information for (distance, angle, complex reflection coefficient)
//! and the resulting Cramér-Rao bounds.
//!
//! Parameter order throughout is (distance, angle) for the pose block and
//! (Re β, Im β) for the nuisance block.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::linalg::{hermitian_part, re_trace, CMat, J};

/// Real 2×2 blocks of the 4×4 Fisher information matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherBlocks {
    pub j11: Matrix2<f64>,
    /// Rows (distance, angle), columns (Re β, Im β).
    pub j12: Matrix2<f64>,
    pub j22: Matrix2<f64>,
}

impl FisherBlocks {
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            j11: self.j11 * a,
            j12: self.j12 * a,
            j22: self.j22 * a,
        }
    }

    pub fn full(&self) -> nalgebra::Matrix4<f64> {
        let mut out = nalgebra::Matrix4::zeros();
        out.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.j11);
        out.fixed_view_mut::<2, 2>(0, 2).copy_from(&self.j12);
        out.fixed_view_mut::<2, 2>(2, 0).copy_from(&self.j12.transpose());
        out.fixed_view_mut::<2, 2>(2, 2).copy_from(&self.j22);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    /// m².
    pub crb_dist: f64,
    /// rad².
    pub crb_angle: f64,
    /// m.
    pub rcrb_dist: f64,
    /// deg.
    pub rcrb_angle: f64,
}

impl CrbReport {
    pub fn from_crb(crb_dist: f64, crb_angle: f64) -> Self {
        Self {
            crb_dist,
            crb_angle,
            rcrb_dist: crb_dist.sqrt(),
            rcrb_angle: crb_angle.sqrt().to_degrees(),
        }
    }

    pub fn unbounded() -> Self {
        Self::from_crb(f64::INFINITY, f64::INFINITY)
    }

    pub fn is_bounded(&self) -> bool {
        self.crb_dist.is_finite() && self.crb_angle.is_finite()
    }

    /// Angle bound in deg².
    pub fn crb_angle_deg2(&self) -> f64 {
        self.crb_angle.to_degrees().to_degrees()
    }
}

/// Hermitian matrices `G` with `J = Tr(G R_x)` for every Fisher entry.
#[derive(Debug, Clone)]
pub struct FisherCoefficients {
    pub j11: [[CMat; 2]; 2],
    pub j12: [[CMat; 2]; 2],
    pub j22: CMat,
}

impl FisherCoefficients {
    pub fn contract(&self, r_x: &CMat) -> FisherBlocks {
        let t = |g: &CMat| crate::linalg::trace_of_product(g, r_x).re;
        let j11 = Matrix2::new(t(&self.j11[0][0]), t(&self.j11[0][1]), t(&self.j11[1][0]), t(&self.j11[1][1]));
        let j12 = Matrix2::new(t(&self.j12[0][0]), t(&self.j12[0][1]), t(&self.j12[1][0]), t(&self.j12[1][1]));
        let c = t(&self.j22);
        FisherBlocks {
            j11,
            j12,
            j22: Matrix2::new(c, 0.0, 0.0, c),
        }
    }
}

fn derivatives(ch: &ChannelRealization) -> [&CMat; 2] {
    [&ch.db_ddist, &ch.db_dtheta]
}

/// Fisher information blocks for transmit covariance `r_x` over `t_obs`
/// snapshots.
pub fn fim(ch: &ChannelRealization, beta: Complex64, r_x: &CMat, t_obs: f64, noise_var: f64) -> FisherBlocks {
    let scale = 2.0 * t_obs / noise_var;
    let d = derivatives(ch);
    let mut j11 = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let m = d[b] * r_x * d[a].adjoint();
            j11[(a, b)] = scale * beta.norm_sqr() * re_trace(&m);
        }
    }
    let mut j12 = Matrix2::zeros();
    for a in 0..2 {
        let c = (&ch.b * r_x * d[a].adjoint()).trace();
        let v = beta.conj() * c;
        j12[(a, 0)] = scale * v.re;
        j12[(a, 1)] = scale * v.im;
    }
    let c22 = scale * re_trace(&(&ch.b * r_x * ch.b.adjoint()));
    FisherBlocks {
        j11: (j11 + j11.transpose()) * 0.5,
        j12,
        j22: Matrix2::new(c22, 0.0, 0.0, c22),
    }
}

pub fn fim_coefficients(ch: &ChannelRealization, beta: Complex64, t_obs: f64, noise_var: f64) -> FisherCoefficients {
    let scale = 2.0 * t_obs / noise_var;
    let d = derivatives(ch);
    let pair = |a: usize, b: usize| hermitian_part(&(d[a].adjoint() * d[b])).scale(scale * beta.norm_sqr());
    let cross = |a: usize, phase: Complex64| {
        let m = (d[a].adjoint() * &ch.b) * (beta.conj() * phase);
        hermitian_part(&m).scale(scale)
    };
    let one = Complex64::new(1.0, 0.0);
    // Im z = Re(−j z)
    FisherCoefficients {
        j11: [[pair(0, 0), pair(0, 1)], [pair(1, 0), pair(1, 1)]],
        j12: [[cross(0, one), cross(0, -J)], [cross(1, one), cross(1, -J)]],
        j22: hermitian_part(&(ch.b.adjoint() * &ch.b)).scale(scale),
    }
}

/// Schur complement `J₁₁ − J₁₂ J₂₂⁻¹ J₁₂ᵀ`. A nuisance block without
/// information contributes nothing.
pub fn schur_complement(blocks: &FisherBlocks) -> Matrix2<f64> {
    let c = blocks.j22[(0, 0)];
    let mut s = blocks.j11;
    if c > 0.0 {
        s -= blocks.j12 * blocks.j12.transpose() / c;
    }
    (s + s.transpose()) * 0.5
}

/// Distance and angle CRBs. An information matrix without positive definite
/// Schur complement yields the unbounded sentinel.
pub fn crb_from_fim(blocks: &FisherBlocks) -> CrbReport {
    let s = schur_complement(blocks);
    let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    let scale = s[(0, 0)] * s[(1, 1)];
    if !(s[(0, 0)] > 0.0 && s[(1, 1)] > 0.0 && det > 1e-13 * scale) {
        return CrbReport::unbounded();
    }
    CrbReport::from_crb(s[(1, 1)] / det, s[(0, 0)] / det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{realize, ArrayGeometry, Pose};
    use crate::linalg::{cidentity, czeros, hermitian_defect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rng: &mut impl Rng) -> CMat {
        let g = CMat::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &g * g.adjoint()
    }

    fn instance(rng: &mut impl Rng) -> (ChannelRealization, Complex64) {
        let g = ArrayGeometry::half_wavelength(6, 2, 50e9);
        let pose = Pose::new(rng.random_range(0.3..2.8), rng.random_range(4.0..40.0)).unwrap();
        (realize(&pose, &g).unwrap(), Complex64::from_polar(1.0, rng.random_range(0.0..6.28)))
    }

    #[test]
    fn zero_covariance_gives_zero_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (ch, beta) = instance(&mut rng);
        let blocks = fim(&ch, beta, &czeros(6, 6), 256.0, 1e-3);
        assert_eq!(blocks.full().norm(), 0.0);
        assert!(!crb_from_fim(&blocks).is_bounded());
    }

    #[test]
    fn scaling_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (ch, beta) = instance(&mut rng);
        let r = random_psd(6, &mut rng);
        let base = fim(&ch, beta, &r, 256.0, 1e-3);
        let crb = crb_from_fim(&base);
        for alpha in [0.1, 2.0, 37.0] {
            let scaled = fim(&ch, beta, &r.scale(alpha), 256.0, 1e-3);
            assert!((scaled.full() - base.full() * alpha).norm() <= 1e-12 * base.full().norm() * alpha);
            let c2 = crb_from_fim(&scaled);
            assert!((c2.crb_dist * alpha / crb.crb_dist - 1.0).abs() < 1e-8);
            assert!((c2.crb_angle * alpha / crb.crb_angle - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn block_diagonal_crb() {
        let blocks = FisherBlocks {
            j11: Matrix2::new(4.0, 0.0, 0.0, 25.0),
            j12: Matrix2::zeros(),
            j22: Matrix2::identity() * 3.0,
        };
        let r = crb_from_fim(&blocks);
        assert!((r.crb_dist - 0.25).abs() < 1e-15 && (r.crb_angle - 0.04).abs() < 1e-15);
        assert!((r.rcrb_dist - 0.5).abs() < 1e-15);
        assert!((r.rcrb_angle - 0.2f64.to_degrees()).abs() < 1e-12);
    }

    #[test]
    fn dense_schur_matches_adjugate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (ch, beta) = instance(&mut rng);
            let blocks = fim(&ch, beta, &(random_psd(6, &mut rng) + cidentity(6)), 64.0, 1e-2);
            let s = schur_complement(&blocks);
            let (a, b, c, d) = (s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]);
            let det = a * d - b * c;
            let r = crb_from_fim(&blocks);
            assert!((r.crb_dist - d / det).abs() <= 1e-12 * r.crb_dist);
            assert!((r.crb_angle - a / det).abs() <= 1e-12 * r.crb_angle);
            // Also agrees with the corresponding block of the full inverse.
            let inv = blocks.full().try_inverse().unwrap();
            assert!((inv[(0, 0)] / r.crb_dist - 1.0).abs() < 1e-6);
            assert!((inv[(1, 1)] / r.crb_angle - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn coefficients_reproduce_direct_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let (ch, beta) = instance(&mut rng);
            let r = random_psd(6, &mut rng);
            let coeff = fim_coefficients(&ch, beta, 128.0, 1e-3);
            let a = coeff.contract(&r).full();
            let b = fim(&ch, beta, &r, 128.0, 1e-3).full();
            assert!((a - b).norm() <= 1e-10 * b.norm());
            for g in coeff.j11.iter().flatten().chain(coeff.j12.iter().flatten()) {
                assert!(hermitian_defect(g) == 0.0);
            }
        }
    }

    #[test]
    fn zero_derivatives_give_zero_coefficients() {
        let b = cidentity(3);
        let ch = ChannelRealization { h: czeros(3, 1), b, db_dtheta: czeros(3, 3), db_ddist: czeros(3, 3) };
        let coeff = fim_coefficients(&ch, Complex64::new(1.0, 0.0), 10.0, 1.0);
        assert!(coeff.j11.iter().flatten().chain(coeff.j12.iter().flatten()).all(|g| g.norm() == 0.0));
    }

    #[test]
    fn crb_decreases_with_more_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let (ch, beta) = instance(&mut rng);
            let r = random_psd(6, &mut rng) + cidentity(6).scale(0.01);
            let more = &r + random_psd(6, &mut rng);
            let c1 = crb_from_fim(&fim(&ch, beta, &r, 256.0, 1e-3));
            let c2 = crb_from_fim(&fim(&ch, beta, &more, 256.0, 1e-3));
            assert!(c2.crb_dist <= c1.crb_dist * (1.0 + 1e-9));
            assert!(c2.crb_angle <= c1.crb_angle * (1.0 + 1e-9));
        }
    }
}

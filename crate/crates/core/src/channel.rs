//! Near-field array response for a uniform linear RSU array talking to a
//! uniform linear vehicle array.
//!
//! Element positions are measured from the array centre, so element `i` of an
//! `N`-element array sits at `(i − (N − 1)/2) · spacing`. The steering matrix
//! keeps the second-order (Fresnel) phase terms, which is what makes the
//! response depend on distance as well as angle.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ChannelError;
use crate::linalg::{CMat, RMat, J};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Poses closer than this multiple of the transmit aperture are rejected.
pub const APERTURE_GUARD: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_tx: usize,
    pub n_rx: usize,
    /// Transmit element spacing, m.
    pub d_tx: f64,
    /// Receive element spacing, m.
    pub d_rx: f64,
    /// m.
    pub wavelength: f64,
    /// Hz.
    pub carrier_freq: f64,
}

impl ArrayGeometry {
    /// Half-wavelength spaced arrays at the given carrier.
    pub fn half_wavelength(n_tx: usize, n_rx: usize, carrier_freq: f64) -> Self {
        let wavelength = SPEED_OF_LIGHT / carrier_freq;
        Self {
            n_tx,
            n_rx,
            d_tx: wavelength / 2.0,
            d_rx: wavelength / 2.0,
            wavelength,
            carrier_freq,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_tx == 0 || self.n_rx == 0 {
            return Err(ChannelError::Geometry("antenna counts must be >= 1".into()));
        }
        if !(self.d_tx > 0.0 && self.d_rx > 0.0) {
            return Err(ChannelError::Geometry("spacings must be positive".into()));
        }
        if !(self.wavelength > 0.0 && self.carrier_freq > 0.0) {
            return Err(ChannelError::Geometry(
                "wavelength and carrier must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Signed offset of transmit element `i` from the array centre, m.
    pub fn tx_offset(&self, i: usize) -> f64 {
        (i as f64 - (self.n_tx as f64 - 1.0) / 2.0) * self.d_tx
    }

    /// Signed offset of receive element `j` from the array centre, m.
    pub fn rx_offset(&self, j: usize) -> f64 {
        (j as f64 - (self.n_rx as f64 - 1.0) / 2.0) * self.d_rx
    }

    /// Transmit array aperture, m.
    pub fn aperture(&self) -> f64 {
        (self.n_tx as f64 - 1.0) * self.d_tx
    }

    pub fn rayleigh_distance(&self) -> f64 {
        rayleigh_distance(self.aperture(), self.carrier_freq)
    }
}

/// Angle (radians, from the array axis) and distance (m) of a target seen
/// from the array centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub angle: f64,
    pub distance: f64,
}

impl Pose {
    pub fn new(angle: f64, distance: f64) -> Result<Self, ChannelError> {
        let pose = Self { angle, distance };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.distance > 0.0) {
            return Err(ChannelError::NonPositiveDistance(self.distance));
        }
        if !(self.angle > 0.0 && self.angle < std::f64::consts::PI) {
            return Err(ChannelError::AngleOutOfRange(self.angle));
        }
        Ok(())
    }

    /// Pose of a point relative to an array centred at `origin` whose axis
    /// points along +x.
    pub fn from_cartesian(origin: (f64, f64), point: (f64, f64)) -> Result<Self, ChannelError> {
        let dx = point.0 - origin.0;
        let dy = point.1 - origin.1;
        Self::new(dy.atan2(dx), dx.hypot(dy))
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Composite channel, `n_tx × n_rx`.
    pub h: CMat,
    /// Two-way response `A Aᴴ`, `n_tx × n_tx`.
    pub b: CMat,
    pub db_dtheta: CMat,
    pub db_ddist: CMat,
}

fn check(pose: &Pose, geom: &ArrayGeometry) -> Result<(), ChannelError> {
    geom.validate()?;
    pose.validate()?;
    let guard = APERTURE_GUARD * geom.aperture();
    if pose.distance < guard {
        return Err(ChannelError::InsideAperture {
            distance: pose.distance,
            guard,
        });
    }
    Ok(())
}

/// Phase of steering entry `(i, j)` together with its partials in angle and
/// distance.
fn phase_terms(x: f64, y: f64, pose: &Pose, k: f64) -> (f64, f64, f64) {
    let (s, c) = pose.angle.sin_cos();
    let d = pose.distance;
    let s2 = s * s;
    let phase = k * (x * c - x * x * s2 / (2.0 * d)) - k * (y * c - y * y * s2 / (2.0 * d))
        + k * x * y * s2 / d;
    let dphase_dtheta = k * (-x * s - x * x * s * c / d) - k * (-y * s - y * y * s * c / d)
        + 2.0 * k * x * y * s * c / d;
    let dphase_ddist =
        k * x * x * s2 / (2.0 * d * d) - k * y * y * s2 / (2.0 * d * d) - k * x * y * s2 / (d * d);
    (phase, dphase_dtheta, dphase_ddist)
}

/// Near-field steering matrix `A(θ, d)`, `n_tx × n_rx`, unit-modulus entries.
pub fn steering_matrix(pose: &Pose, geom: &ArrayGeometry) -> Result<CMat, ChannelError> {
    check(pose, geom)?;
    let k = geom.wavenumber();
    Ok(DMatrix::from_fn(geom.n_tx, geom.n_rx, |i, j| {
        let (phase, _, _) = phase_terms(geom.tx_offset(i), geom.rx_offset(j), pose, k);
        Complex64::from_polar(1.0, phase)
    }))
}

/// NUSW path-loss matrix, `n_rx × n_tx`.
pub fn path_loss_matrix(pose: &Pose, geom: &ArrayGeometry) -> Result<RMat, ChannelError> {
    check(pose, geom)?;
    let d = pose.distance;
    let c = pose.angle.cos();
    let mut out = RMat::zeros(geom.n_rx, geom.n_tx);
    for r in 0..geom.n_rx {
        for t in 0..geom.n_tx {
            let off = geom.tx_offset(t) + geom.rx_offset(r);
            let phi = d * d + off * off - 2.0 * d * off * c;
            if !(phi > 0.0) {
                return Err(ChannelError::NonPositivePathTerm { tx: t, rx: r });
            }
            out[(r, t)] = 1.0 / (4.0 * std::f64::consts::PI * phi).sqrt();
        }
    }
    Ok(out)
}

/// Composite channel `H[t, r] = Γ[r, t] · A[t, r]`, `n_tx × n_rx`.
pub fn channel_matrix(pose: &Pose, geom: &ArrayGeometry) -> Result<CMat, ChannelError> {
    let a = steering_matrix(pose, geom)?;
    let gamma = path_loss_matrix(pose, geom)?;
    Ok(DMatrix::from_fn(geom.n_tx, geom.n_rx, |t, r| a[(t, r)] * gamma[(r, t)]))
}

/// Two-way response `B = A Aᴴ`.
pub fn two_way_response(pose: &Pose, geom: &ArrayGeometry) -> Result<CMat, ChannelError> {
    let a = steering_matrix(pose, geom)?;
    Ok(&a * a.adjoint())
}

/// Analytic partials `(∂B/∂θ, ∂B/∂d)` of the two-way response.
pub fn response_derivatives(pose: &Pose, geom: &ArrayGeometry) -> Result<(CMat, CMat), ChannelError> {
    let (_, db_dtheta, db_ddist) = response_with_derivatives(pose, geom)?;
    Ok((db_dtheta, db_ddist))
}

fn response_with_derivatives(
    pose: &Pose,
    geom: &ArrayGeometry,
) -> Result<(CMat, CMat, CMat), ChannelError> {
    check(pose, geom)?;
    let k = geom.wavenumber();
    let mut a = CMat::zeros(geom.n_tx, geom.n_rx);
    let mut a_theta = CMat::zeros(geom.n_tx, geom.n_rx);
    let mut a_dist = CMat::zeros(geom.n_tx, geom.n_rx);
    for i in 0..geom.n_tx {
        for j in 0..geom.n_rx {
            let (phase, p_theta, p_dist) = phase_terms(geom.tx_offset(i), geom.rx_offset(j), pose, k);
            let e = Complex64::from_polar(1.0, phase);
            a[(i, j)] = e;
            a_theta[(i, j)] = e * J * p_theta;
            a_dist[(i, j)] = e * J * p_dist;
        }
    }
    let b = &a * a.adjoint();
    let cross = |dot: &CMat| {
        let t = dot * a.adjoint();
        &t + t.adjoint()
    };
    Ok((b, cross(&a_theta), cross(&a_dist)))
}

/// Everything the rate and Fisher computations need for one (RSU, vehicle)
/// pair.
pub fn realize(pose: &Pose, geom: &ArrayGeometry) -> Result<ChannelRealization, ChannelError> {
    let h = channel_matrix(pose, geom)?;
    let (b, db_dtheta, db_ddist) = response_with_derivatives(pose, geom)?;
    Ok(ChannelRealization {
        h,
        b,
        db_dtheta,
        db_ddist,
    })
}

/// Rayleigh distance `2 D² f_c / c`, m.
pub fn rayleigh_distance(aperture: f64, carrier_freq: f64) -> f64 {
    2.0 * aperture * aperture * carrier_freq / SPEED_OF_LIGHT
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_defect, hermitian_eigen, rel_frobenius};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn geom(n_tx: usize, n_rx: usize) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(n_tx, n_rx, 50e9)
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        Pose::new(rng.random_range(0.2..PI - 0.2), rng.random_range(3.0..80.0)).unwrap()
    }

    #[test]
    fn centre_element_is_one() {
        let g = geom(5, 3);
        let a = steering_matrix(&Pose::new(0.7, 12.0).unwrap(), &g).unwrap();
        let z = a[(2, 1)];
        assert!((z.re - 1.0).abs() < 1e-15 && z.im.abs() < 1e-15);
    }

    #[test]
    fn broadside_phase_is_pure_fresnel() {
        let g = geom(6, 1);
        let pose = Pose::new(FRAC_PI_2, 7.0).unwrap();
        let a = steering_matrix(&pose, &g).unwrap();
        // Even n_rx = 1 puts the receive element at the centre.
        for t in 0..g.n_tx {
            let x = g.tx_offset(t);
            let expect = -g.wavenumber() * x * x / (2.0 * pose.distance);
            let got = a[(t, 0)].arg();
            let diff = (got - expect).rem_euclid(2.0 * PI);
            assert!(diff.min(2.0 * PI - diff) < 1e-12);
        }
    }

    #[test]
    fn unit_modulus_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = geom(9, 4);
        for _ in 0..20 {
            let a = steering_matrix(&random_pose(&mut rng), &g).unwrap();
            assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-13));
        }
    }

    #[test]
    fn far_field_limit_matches_planar_wave() {
        let g = geom(16, 2);
        let rayleigh = g.rayleigh_distance();
        let pose = Pose::new(1.1, 1e6 * rayleigh).unwrap();
        let a = steering_matrix(&pose, &g).unwrap();
        let k = g.wavenumber();
        let c = pose.angle.cos();
        for t in 0..g.n_tx {
            for r in 0..g.n_rx {
                let planar = k * (g.tx_offset(t) - g.rx_offset(r)) * c;
                let diff = (a[(t, r)].arg() - planar).rem_euclid(2.0 * PI);
                assert!(diff.min(2.0 * PI - diff) < 1e-3);
            }
        }
    }

    #[test]
    fn path_loss_examples() {
        let g = geom(3, 3);
        let pose = Pose::new(0.9, 10.0).unwrap();
        let gamma = path_loss_matrix(&pose, &g).unwrap();
        let centre = gamma[(1, 1)];
        assert!((centre - 1.0 / (2.0 * 10.0 * PI.sqrt())).abs() < 1e-15);
        assert!((centre - 0.028_209_5).abs() < 1e-7);

        let far = path_loss_matrix(&Pose::new(0.9, 20.0).unwrap(), &g).unwrap();
        assert!((far[(1, 1)] - centre / 2.0).abs() < 1e-15);

        let broadside = Pose::new(FRAC_PI_2, 10.0).unwrap();
        let gb = path_loss_matrix(&broadside, &g).unwrap();
        for r in 0..3 {
            for t in 0..3 {
                let off = g.tx_offset(t) + g.rx_offset(r);
                let phi = 100.0 + off * off;
                assert!((gb[(r, t)] - 1.0 / (4.0 * PI * phi).sqrt()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn path_loss_decreases_with_distance() {
        let g = geom(8, 2);
        let mut prev = path_loss_matrix(&Pose::new(0.6, 1.0).unwrap(), &g).unwrap();
        for step in 1..50 {
            let next = path_loss_matrix(&Pose::new(0.6, 1.0 + step as f64 * 0.5).unwrap(), &g).unwrap();
            assert!(next.iter().zip(prev.iter()).all(|(n, p)| n < p));
            prev = next;
        }
    }

    #[test]
    fn rejects_poses_inside_aperture() {
        let g = ArrayGeometry { n_tx: 11, n_rx: 1, d_tx: 0.5, d_rx: 0.5, wavelength: 1.0, carrier_freq: 3e8 };
        assert!(matches!(
            path_loss_matrix(&Pose { angle: 0.5, distance: 5.5 }, &g),
            Err(ChannelError::InsideAperture { .. })
        ));
        assert!(matches!(
            steering_matrix(&Pose { angle: 0.5, distance: -1.0 }, &g),
            Err(ChannelError::NonPositiveDistance(_))
        ));
    }

    #[test]
    fn channel_is_hadamard_of_loss_and_steering() {
        let g = geom(4, 3);
        let pose = Pose::new(1.3, 9.0).unwrap();
        let h = channel_matrix(&pose, &g).unwrap();
        let gamma = path_loss_matrix(&pose, &g).unwrap();
        for t in 0..4 {
            for r in 0..3 {
                assert!((h[(t, r)].norm() - gamma[(r, t)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_by_one_channel_matches_scalar_formula() {
        let g = geom(2, 1);
        let pose = Pose::new(0.8, 6.0).unwrap();
        let h = channel_matrix(&pose, &g).unwrap();
        let k = 2.0 * PI / g.wavelength;
        let (s, c) = pose.angle.sin_cos();
        for t in 0..2 {
            let x = (t as f64 - 0.5) * g.wavelength / 2.0;
            let phi = 36.0 + x * x - 12.0 * x * c;
            let gain = 1.0 / (4.0 * PI * phi).sqrt();
            let phase = k * (x * c - x * x * s * s / 12.0);
            let expect = Complex64::from_polar(gain, phase);
            assert!((h[(t, 0)] - expect).norm() < 1e-14);
        }
    }

    fn finite_difference(pose: &Pose, g: &ArrayGeometry, step: f64) -> (CMat, CMat) {
        let b = |a: f64, d: f64| two_way_response(&Pose { angle: a, distance: d }, g).unwrap();
        let dt = (b(pose.angle + step, pose.distance) - b(pose.angle - step, pose.distance)) / Complex64::new(2.0 * step, 0.0);
        // The distance sensitivity is tiny, so a step relative to d keeps
        // cancellation error below the truncation error.
        let hd = step * pose.distance * 10.0;
        let dd = (b(pose.angle, pose.distance + hd) - b(pose.angle, pose.distance - hd)) / Complex64::new(2.0 * hd, 0.0);
        (dt, dd)
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = geom(8, 2);
        for _ in 0..20 {
            let pose = random_pose(&mut rng);
            let (at, ad) = response_derivatives(&pose, &g).unwrap();
            let (ft, fd) = finite_difference(&pose, &g, 1e-5);
            assert!(rel_frobenius(&at, &ft) < 1e-5);
            assert!(rel_frobenius(&ad, &fd) < 1e-5);
            assert!(hermitian_defect(&at) < 1e-12 && hermitian_defect(&ad) < 1e-12);
        }
    }

    #[test]
    fn scalar_distance_derivative_closed_form() {
        // Three transmit elements, one receive element at the centre:
        // B[i, j] = exp(j (ψ(x_i) − ψ(x_j))), ψ(x) = k (x cosθ − x² sin²θ / (2d)).
        let g = geom(3, 1);
        let pose = Pose::new(1.0, 4.0).unwrap();
        let (dth, dd) = response_derivatives(&pose, &g).unwrap();
        let k = g.wavenumber();
        let (s, c) = pose.angle.sin_cos();
        let d = pose.distance;
        let psi = |x: f64| k * (x * c - x * x * s * s / (2.0 * d));
        let dpsi_dd = |x: f64| k * x * x * s * s / (2.0 * d * d);
        let dpsi_dth = |x: f64| k * (-x * s - x * x * s * c / d);
        for i in 0..3 {
            for j in 0..3 {
                let (xi, xj) = (g.tx_offset(i), g.tx_offset(j));
                let bij = Complex64::from_polar(1.0, psi(xi) - psi(xj));
                let want_d = bij * J * (dpsi_dd(xi) - dpsi_dd(xj));
                let want_t = bij * J * (dpsi_dth(xi) - dpsi_dth(xj));
                assert!((dd[(i, j)] - want_d).norm() < 1e-12);
                assert!((dth[(i, j)] - want_t).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn two_way_response_is_psd_with_bounded_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = geom(8, 2);
        for _ in 0..10 {
            let b = two_way_response(&random_pose(&mut rng), &g).unwrap();
            let (vals, _) = hermitian_eigen(&b);
            assert!(vals[0] > -1e-10);
            let significant = vals.iter().filter(|&&v| v > 1e-9 * vals[7]).count();
            assert!(significant <= g.n_rx);
        }
    }

    #[test]
    fn rayleigh_distance_examples() {
        let r = rayleigh_distance(1.0, 50e9);
        assert!((r - 2.0 * 50e9 / SPEED_OF_LIGHT).abs() < 1e-9);
        assert!((r - 333.56).abs() < 0.01);
        assert_eq!(rayleigh_distance(0.0, 50e9), 0.0);
        assert!((rayleigh_distance(2.0, 50e9) / r - 4.0).abs() < 1e-12);
    }
}

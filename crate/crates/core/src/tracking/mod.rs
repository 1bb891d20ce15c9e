//! Vehicle kinematics, synthetic radar measurements and the filters that
//! track them.

pub mod kalman;
pub mod metrics;
pub mod particle;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::SPEED_OF_LIGHT;

/// Distances are clamped here after noisy propagation or measurement.
pub const MIN_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// rad.
    pub angle: f64,
    /// m.
    pub distance: f64,
    /// m/s.
    pub velocity: f64,
    pub beta: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// rad.
    pub angle: f64,
    /// m.
    pub distance: f64,
    /// m/s.
    pub velocity: f64,
}

impl Measurement {
    pub fn exact(q: &VehicleState) -> Self {
        Self {
            angle: q.angle,
            distance: q.distance,
            velocity: q.velocity,
        }
    }
}

/// Process and measurement variances in internal units (rad², m², (m/s)²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// (angle, distance, velocity, reflection coefficient).
    pub q1: [f64; 4],
    /// (angle, distance, velocity).
    pub q2: [f64; 3],
}

impl NoiseConfig {
    /// Builds the configuration from variances whose angle entries are in
    /// deg².
    pub fn from_degrees(q1: [f64; 4], q2: [f64; 3]) -> Self {
        let r = std::f64::consts::PI / 180.0;
        Self {
            q1: [q1[0] * r * r, q1[1], q1[2], q1[3]],
            q2: [q2[0] * r * r, q2[1], q2[2]],
        }
    }

    pub fn zero() -> Self {
        Self {
            q1: [0.0; 4],
            q2: [0.0; 3],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.q1.iter().chain(&self.q2).all(|v| *v >= 0.0 && v.is_finite())
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R, var: f64) -> f64 {
    if var > 0.0 {
        var.sqrt() * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    }
}

/// Noise-free state transition.
pub fn propagate(q: &VehicleState, dt: f64) -> VehicleState {
    let (s, c) = q.angle.sin_cos();
    let step = q.velocity * dt;
    VehicleState {
        angle: q.angle + step * s / q.distance,
        distance: q.distance - step * c,
        velocity: q.velocity,
        beta: q.beta * (1.0 + step * c / q.distance),
    }
}

/// One step of the kinematic model with Gaussian process noise.
pub fn kinematic_step<R: Rng + ?Sized>(q: &VehicleState, dt: f64, noise: &NoiseConfig, rng: &mut R) -> VehicleState {
    let mut next = propagate(q, dt);
    next.angle += gauss(rng, noise.q1[0]);
    next.distance = (next.distance + gauss(rng, noise.q1[1])).max(MIN_DISTANCE);
    next.velocity += gauss(rng, noise.q1[2]);
    let half = noise.q1[3] / 2.0;
    next.beta += Complex64::new(gauss(rng, half), gauss(rng, half));
    next
}

/// Noisy (angle, distance, velocity) estimate standing in for the matched
/// filter and subspace angle estimator.
pub fn synthesize_measurement<R: Rng + ?Sized>(q: &VehicleState, noise: &NoiseConfig, rng: &mut R) -> Measurement {
    Measurement {
        angle: q.angle + gauss(rng, noise.q2[0]),
        distance: (q.distance + gauss(rng, noise.q2[1])).max(MIN_DISTANCE),
        velocity: q.velocity + gauss(rng, noise.q2[2]),
    }
}

/// Range from a round-trip delay, m.
pub fn distance_from_delay(tau: f64) -> f64 {
    SPEED_OF_LIGHT * tau / 2.0
}

/// Radial velocity from a Doppler shift, m/s.
pub fn velocity_from_doppler(doppler: f64, wavelength: f64) -> f64 {
    wavelength * doppler / 2.0
}

//! Bootstrap particle filter with multinomial resampling every step.

use num_complex::Complex64;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

use super::{kinematic_step, Measurement, NoiseConfig, VehicleState};
use crate::error::TrackingError;

/// Log-likelihood below which every particle is considered to have
/// underflowed.
const COLLAPSE_LOGLIK: f64 = -700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBelief {
    pub particles: Vec<VehicleState>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfOutput {
    pub estimate: VehicleState,
    /// Every particle's likelihood underflowed and the weights were reset.
    pub collapsed: bool,
}

impl ParticleBelief {
    /// Particles drawn around `mean` with per-component variances
    /// `prior_var` (angle, distance, velocity, reflection coefficient).
    pub fn gaussian<R: Rng + ?Sized>(
        mean: &VehicleState,
        prior_var: [f64; 4],
        n: usize,
        rng: &mut R,
    ) -> Result<Self, TrackingError> {
        if n == 0 {
            return Err(TrackingError::NoParticles);
        }
        let mut draw = |var: f64| {
            if var > 0.0 {
                var.sqrt() * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        };
        let particles = (0..n)
            .map(|_| VehicleState {
                angle: mean.angle + draw(prior_var[0]),
                distance: (mean.distance + draw(prior_var[1])).max(super::MIN_DISTANCE),
                velocity: mean.velocity + draw(prior_var[2]),
                beta: mean.beta + Complex64::new(draw(prior_var[3] / 2.0), draw(prior_var[3] / 2.0)),
            })
            .collect();
        Ok(Self {
            particles,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weighted_mean(&self) -> VehicleState {
        let mut out = VehicleState {
            angle: 0.0,
            distance: 0.0,
            velocity: 0.0,
            beta: Complex64::new(0.0, 0.0),
        };
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            out.angle += w * p.angle;
            out.distance += w * p.distance;
            out.velocity += w * p.velocity;
            out.beta += p.beta * w;
        }
        out
    }

    /// Moves every particle through the kinematic model.
    pub fn predict<R: Rng + ?Sized>(&mut self, dt: f64, noise: &NoiseConfig, rng: &mut R) {
        for p in &mut self.particles {
            *p = kinematic_step(p, dt, noise, rng);
        }
    }

    /// Reweights by the measurement likelihood and normalizes. Returns
    /// `true` when every likelihood underflowed and the weights were reset to
    /// uniform.
    pub fn update(&mut self, m: &Measurement, noise: &NoiseConfig) -> bool {
        let loglik: Vec<f64> = self
            .particles
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| w.ln() + log_likelihood(p, m, noise))
            .collect();
        let max = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = self.len() as f64;
        if !(max > COLLAPSE_LOGLIK) {
            self.weights.iter_mut().for_each(|w| *w = 1.0 / n);
            return true;
        }
        let unnorm: Vec<f64> = loglik.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = unnorm.iter().sum();
        self.weights = unnorm.iter().map(|u| u / total).collect();
        false
    }

    /// Multinomial resampling; weights become uniform.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.len();
        let Ok(dist) = WeightedIndex::new(&self.weights) else {
            self.weights = vec![1.0 / n as f64; n];
            return;
        };
        self.particles = (0..n).map(|_| self.particles[dist.sample(rng)]).collect();
        self.weights = vec![1.0 / n as f64; n];
    }
}

/// Gaussian log-likelihood of a measurement given a particle, dropping the
/// constant. A zero variance admits only exact matches.
pub fn log_likelihood(p: &VehicleState, m: &Measurement, noise: &NoiseConfig) -> f64 {
    let terms = [
        (m.angle - p.angle, noise.q2[0]),
        (m.distance - p.distance, noise.q2[1]),
        (m.velocity - p.velocity, noise.q2[2]),
    ];
    let mut acc = 0.0;
    for (err, var) in terms {
        if var > 0.0 {
            acc -= 0.5 * err * err / var;
        } else if err.abs() > 1e-12 * (1.0 + m.distance.abs()) {
            return f64::NEG_INFINITY;
        }
    }
    acc
}

/// Propagate, weight, estimate, resample.
pub fn particle_filter_step<R: Rng + ?Sized>(
    belief: &ParticleBelief,
    m: &Measurement,
    dt: f64,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<(ParticleBelief, PfOutput), TrackingError> {
    if belief.is_empty() {
        return Err(TrackingError::NoParticles);
    }
    let mut next = belief.clone();
    next.predict(dt, noise, rng);
    let collapsed = next.update(m, noise);
    let estimate = next.weighted_mean();
    next.resample(rng);
    Ok((next, PfOutput { estimate, collapsed }))
}

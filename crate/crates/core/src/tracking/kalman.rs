//! Extended and unscented Kalman filters over (angle, distance, velocity,
//! |β|). The reflection-coefficient phase is not observable from the
//! measurements, so only its magnitude is tracked.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};
use num_complex::Complex64;

use super::{Measurement, NoiseConfig, VehicleState, MIN_DISTANCE};

/// Eigenvalue floor applied to covariances after every update.
pub const COV_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl GaussianBelief {
    pub fn new(mean: &VehicleState, prior_var: [f64; 4]) -> Self {
        Self {
            mean: to_vector(mean),
            cov: Matrix4::from_diagonal(&Vector4::from(prior_var)),
        }
    }

    pub fn estimate(&self) -> VehicleState {
        from_vector(&self.mean)
    }
}

pub fn to_vector(q: &VehicleState) -> Vector4<f64> {
    Vector4::new(q.angle, q.distance, q.velocity, q.beta.norm())
}

pub fn from_vector(x: &Vector4<f64>) -> VehicleState {
    VehicleState {
        angle: x[0],
        distance: x[1],
        velocity: x[2],
        beta: Complex64::new(x[3], 0.0),
    }
}

pub fn transition(x: &Vector4<f64>, dt: f64) -> Vector4<f64> {
    let (s, c) = x[0].sin_cos();
    let step = x[2] * dt;
    Vector4::new(x[0] + step * s / x[1], x[1] - step * c, x[2], x[3] * (1.0 + step * c / x[1]))
}

pub fn transition_jacobian(x: &Vector4<f64>, dt: f64) -> Matrix4<f64> {
    let (th, d, v, b) = (x[0], x[1], x[2], x[3]);
    let (s, c) = th.sin_cos();
    let step = v * dt;
    Matrix4::new(
        1.0 + step * c / d, -step * s / (d * d), dt * s / d, 0.0,
        step * s, 1.0, -dt * c, 0.0,
        0.0, 0.0, 1.0, 0.0,
        -b * step * s / d, -b * step * c / (d * d), b * dt * c / d, 1.0 + step * c / d,
    )
}

fn measurement_matrix() -> Matrix3x4<f64> {
    Matrix3x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

/// Symmetrizes and floors the spectrum of a covariance.
pub fn condition(cov: &Matrix4<f64>) -> Matrix4<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= COV_FLOOR) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(COV_FLOOR));
    let out = eig.eigenvectors * Matrix4::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

/// Linear update with the direct (angle, distance, velocity) observation.
pub fn measurement_update(prior: &GaussianBelief, m: &Measurement, noise: &NoiseConfig) -> GaussianBelief {
    let h = measurement_matrix();
    let r = Matrix3::from_diagonal(&Vector3::from(noise.q2));
    let s = h * prior.cov * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .unwrap_or_else(|| s.pseudo_inverse(1e-15).unwrap_or_else(|_| Matrix3::zeros()));
    let k = prior.cov * h.transpose() * s_inv;
    let innovation = Vector3::new(m.angle, m.distance, m.velocity) - h * prior.mean;
    let mut mean = prior.mean + k * innovation;
    mean[1] = mean[1].max(MIN_DISTANCE);
    let i_kh = Matrix4::identity() - k * h;
    let cov = i_kh * prior.cov * i_kh.transpose() + k * r * k.transpose();
    GaussianBelief { mean, cov: condition(&cov) }
}

fn process_cov(noise: &NoiseConfig) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::from(noise.q1))
}

pub fn ekf_predict(belief: &GaussianBelief, dt: f64, noise: &NoiseConfig) -> GaussianBelief {
    let f = transition_jacobian(&belief.mean, dt);
    let mut mean = transition(&belief.mean, dt);
    mean[1] = mean[1].max(MIN_DISTANCE);
    GaussianBelief {
        mean,
        cov: condition(&(f * belief.cov * f.transpose() + process_cov(noise))),
    }
}

pub fn ekf_step(belief: &GaussianBelief, m: &Measurement, dt: f64, noise: &NoiseConfig) -> (GaussianBelief, VehicleState) {
    let post = measurement_update(&ekf_predict(belief, dt, noise), m, noise);
    (post, post.estimate())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// Sigma-point weights `(mean weights, covariance weights)` for dimension `n`.
pub fn sigma_weights(n: usize, p: &UkfParams) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let lambda = p.alpha * p.alpha * (nf + p.kappa) - nf;
    let rest = 1.0 / (2.0 * (nf + lambda));
    let mut wm = vec![rest; 2 * n + 1];
    let mut wc = wm.clone();
    wm[0] = lambda / (nf + lambda);
    wc[0] = wm[0] + 1.0 - p.alpha * p.alpha + p.beta;
    (wm, wc)
}

/// Unscented transform of `N(mean, cov)` through `f`. Returns the output
/// mean, output covariance and input-output cross-covariance.
pub fn unscented_transform<F>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    f: F,
    p: &UkfParams,
) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = mean.len();
    let nf = n as f64;
    let lambda = p.alpha * p.alpha * (nf + p.kappa) - nf;
    let (wm, wc) = sigma_weights(n, p);
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (l.max(0.0) * (nf + lambda)).sqrt()));

    let mut inputs = vec![mean.clone()];
    for i in 0..n {
        inputs.push(mean + root.column(i));
    }
    for i in 0..n {
        inputs.push(mean - root.column(i));
    }
    let outputs: Vec<DVector<f64>> = inputs.iter().map(&f).collect();
    // Accumulate around the centre point to limit cancellation with the
    // large negative centre weight.
    let y0 = outputs[0].clone();
    let mut y_mean = y0.clone();
    for (w, y) in wm.iter().zip(&outputs).skip(1) {
        y_mean += (y - &y0) * *w;
    }
    let m_out = y_mean.len();
    let mut y_cov = DMatrix::zeros(m_out, m_out);
    let mut cross = DMatrix::zeros(n, m_out);
    for ((w, y), x) in wc.iter().zip(&outputs).zip(&inputs) {
        let dy = y - &y_mean;
        let dx = x - mean;
        y_cov += &dy * dy.transpose() * *w;
        cross += dx * dy.transpose() * *w;
    }
    (y_mean, (&y_cov + y_cov.transpose()) * 0.5, cross)
}

pub fn ukf_predict(belief: &GaussianBelief, dt: f64, noise: &NoiseConfig, p: &UkfParams) -> GaussianBelief {
    let mean = DVector::from_column_slice(belief.mean.as_slice());
    let cov = DMatrix::from_column_slice(4, 4, belief.cov.as_slice());
    let (y, py, _) = unscented_transform(
        &mean,
        &cov,
        |x| {
            let v = transition(&Vector4::new(x[0], x[1], x[2], x[3]), dt);
            DVector::from_column_slice(v.as_slice())
        },
        p,
    );
    let mut m = Vector4::from_column_slice(y.as_slice());
    m[1] = m[1].max(MIN_DISTANCE);
    let c = Matrix4::from_column_slice(py.as_slice()) + process_cov(noise);
    GaussianBelief { mean: m, cov: condition(&c) }
}

pub fn ukf_step(
    belief: &GaussianBelief,
    m: &Measurement,
    dt: f64,
    noise: &NoiseConfig,
    p: &UkfParams,
) -> (GaussianBelief, VehicleState) {
    let post = measurement_update(&ukf_predict(belief, dt, noise, p), m, noise);
    (post, post.estimate())
}

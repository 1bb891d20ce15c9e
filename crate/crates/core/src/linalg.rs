//! Small dense complex linear-algebra helpers shared by the channel, sensing
//! and optimization modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

pub const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn czeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn cidentity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Real part of the trace of a complex matrix.
pub fn re_trace(m: &CMat) -> f64 {
    m.trace().re
}

/// `Tr(a * b)` without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `(m + mᴴ) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn max_abs_entry(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    max_abs_entry(&(m - m.adjoint()))
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), czeros(0, 0));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = czeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigen(m).0.first().copied().unwrap_or(0.0)
}

/// Projects a Hermitian matrix onto the PSD cone by clipping negative
/// eigenvalues.
pub fn project_psd(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let n = m.nrows();
    let mut out = czeros(n, n);
    for (i, &l) in vals.iter().enumerate() {
        if l > 0.0 {
            let u = vecs.column(i);
            out += (u * u.adjoint()).scale(l);
        }
    }
    hermitian_part(&out)
}

/// Principal square root of a Hermitian PSD matrix.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let n = m.nrows();
    let mut out = czeros(n, n);
    for (i, &l) in vals.iter().enumerate() {
        let u = vecs.column(i);
        out += (u * u.adjoint()).scale(l.max(0.0).sqrt());
    }
    out
}

/// Natural log-determinant of a Hermitian positive definite matrix.
///
/// Works on the real embedding, whose determinant is the square of the
/// complex one, because the real Cholesky rejects indefinite input reliably.
pub fn ln_det_hpd(m: &CMat) -> Option<f64> {
    let chol = realify(&hermitian_part(m)).cholesky()?;
    let l = chol.l();
    Some((0..2 * m.nrows()).map(|i| l[(i, i)].ln()).sum())
}

pub fn inverse_hpd(m: &CMat) -> Option<CMat> {
    let chol = realify(&hermitian_part(m)).cholesky()?;
    Some(hermitian_part(&derealify(&chol.inverse())))
}

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, tiny)`.
pub fn rel_frobenius(a: &CMat, b: &CMat) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

/// Real symmetric embedding `[Re X, −Im X; Im X, Re X]` of a complex matrix.
pub fn realify(m: &CMat) -> RMat {
    let (r, cdim) = m.shape();
    let mut out = RMat::zeros(2 * r, 2 * cdim);
    for i in 0..r {
        for j in 0..cdim {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + cdim)] = z.re;
            out[(i, j + cdim)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`realify`] for a matrix carrying the embedding structure.
/// Averages the redundant blocks.
pub fn derealify(m: &RMat) -> CMat {
    let n = m.nrows() / 2;
    let mut out = czeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (m[(i, j)] + m[(i + n, j + n)]);
            let im = 0.5 * (m[(i + n, j)] - m[(i, j + n)]);
            out[(i, j)] = Complex64::new(re, im);
        }
    }
    out
}

pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMat {
        let g = CMat::from_fn(n, n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        hermitian_part(&g)
    }

    #[test]
    fn realified_spectrum_is_doubled_hermitian_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..6 {
            let h = random_hermitian(n, &mut rng);
            let (hv, _) = hermitian_eigen(&h);
            let real = realify(&h);
            let mut rv: Vec<f64> = real.symmetric_eigen().eigenvalues.iter().copied().collect();
            rv.sort_by(f64::total_cmp);
            for (i, l) in hv.iter().enumerate() {
                assert!((rv[2 * i] - l).abs() < 1e-10);
                assert!((rv[2 * i + 1] - l).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn realify_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_hermitian(4, &mut rng);
        assert!(rel_frobenius(&derealify(&realify(&h)), &h) < 1e-15);
    }

    #[test]
    fn psd_projection_and_sqrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(5, &mut rng);
        let p = project_psd(&h);
        assert!(min_eigenvalue(&p) > -1e-12);
        let s = psd_sqrt(&p);
        assert!(rel_frobenius(&(&s * &s), &p) < 1e-10);
    }

    #[test]
    fn logdet_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_hermitian(4, &mut rng);
        let m = &g * &g.adjoint() + cidentity(4);
        let (vals, _) = hermitian_eigen(&m);
        let expect: f64 = vals.iter().map(|v| v.ln()).sum();
        assert!((ln_det_hpd(&m).unwrap() - expect).abs() < 1e-12);
        assert!(ln_det_hpd(&(-cidentity(2))).is_none());
    }
}

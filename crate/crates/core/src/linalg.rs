//! Dense vector/matrix aliases and small numerical helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub fn check_dim(v: &Vector, expected: usize, context: &str) -> Result<()> {
    if v.len() != expected {
        return Err(Error::dim(context, expected, v.len()));
    }
    Ok(())
}

/// Fails with the first offending coordinate if `v` holds NaN or infinity.
pub fn ensure_finite(v: &Vector, context: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::numerical(context, i)),
        None => Ok(()),
    }
}

pub fn max_abs_diff(a: &Vector, b: &Vector) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn symmetry_defect(m: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn gaussian_vector<R: Rng + ?Sized>(dim: usize, std: f64, rng: &mut R) -> Vector {
    Vector::from_fn(dim, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Uniform direction on the unit sphere in `dim` dimensions.
pub fn unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    loop {
        let v = gaussian_vector(dim, 1.0, rng);
        let n = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

/// Uniform point in the closed ball of the given radius.
pub fn uniform_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vector {
    if dim == 0 || radius == 0.0 {
        return Vector::zeros(dim);
    }
    let u: f64 = rng.random();
    unit_sphere(dim, rng) * (radius * u.powf(1.0 / dim as f64))
}

/// Haar-distributed orthogonal matrix via QR of a Gaussian matrix with sign fix.
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix {
    let qr = gaussian_matrix(dim, dim, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Symmetric matrix `U diag(eigs) Uᵀ` for a random orthogonal `U`.
pub fn symmetric_with_spectrum<R: Rng + ?Sized>(eigs: &[f64], rng: &mut R) -> Matrix {
    let u = random_orthogonal(eigs.len(), rng);
    let d = Matrix::from_diagonal(&Vector::from_column_slice(eigs));
    let m = &u * d * u.transpose();
    (&m + m.transpose()) * 0.5
}

/// `count` values evenly spaced on `[lo, hi]`, both ends included.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal(6, &mut rng);
        let err = (&q.transpose() * &q - Matrix::identity(6, 6)).abs().max();
        assert!(err < 1e-12);
    }

    #[test]
    fn prescribed_spectrum_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eigs = [0.5, 1.0, 3.0, 4.0];
        let m = symmetric_with_spectrum(&eigs, &mut rng);
        for (a, b) in symmetric_eigenvalues(&m).iter().zip(eigs) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(symmetry_defect(&m), 0.0);
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert!(uniform_ball(5, 0.3, &mut rng).norm() <= 0.3 + 1e-15);
        }
    }

    #[test]
    fn finite_check_reports_coordinate() {
        let v = Vector::from_vec(vec![1.0, f64::NAN, 2.0]);
        match ensure_finite(&v, "probe") {
            Err(Error::Numerical { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}

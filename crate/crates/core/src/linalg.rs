//! Fixed-size helpers for 2×2 symmetric matrices and small dense covariances.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::error::{Error, Result};

/// Pivot threshold below which a matrix is treated as not positive definite.
pub const EPS_PD: f64 = 1e-12;

/// Diagonal floor (m²) added to any covariance consumed by a density or a distance.
pub const EPS_REG: f64 = 1e-6;

pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

/// Lower-triangular Cholesky factor of a symmetric 2×2 matrix.
pub fn cholesky2(m: &Mat2) -> Result<Mat2> {
    let a = m[(0, 0)];
    if !(a > EPS_PD) {
        return Err(Error::NotPositiveDefinite { pivot: a });
    }
    let l00 = a.sqrt();
    let l10 = m[(1, 0)] / l00;
    let d = m[(1, 1)] - l10 * l10;
    if !(d > EPS_PD) {
        return Err(Error::NotPositiveDefinite { pivot: d });
    }
    Ok(Mat2::new(l00, 0.0, l10, d.sqrt()))
}

/// `ln det m` through the Cholesky factor.
pub fn logdet2(m: &Mat2) -> Result<f64> {
    let l = cholesky2(m)?;
    Ok(2.0 * (l[(0, 0)].ln() + l[(1, 1)].ln()))
}

/// Inverse of a positive-definite 2×2 matrix together with its determinant.
pub fn inverse2(m: &Mat2) -> Result<(Mat2, f64)> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !(det > EPS_PD) || !(m[(0, 0)] > EPS_PD) {
        return Err(Error::NotPositiveDefinite { pivot: det });
    }
    let inv = Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det;
    Ok((inv, det))
}

pub fn symmetrize2(m: &Mat2) -> Mat2 {
    (m + m.transpose()) * 0.5
}

/// Symmetrized copy with `EPS_REG` added to the diagonal.
pub fn regularize2(m: &Mat2) -> Mat2 {
    symmetrize2(m) + Mat2::identity() * EPS_REG
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Wrap an angle to (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Upper-triangle entries of a square matrix, row by row.
pub fn upper_triangle(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Eigenvalues (descending) and the unit eigenvector of the larger one for a symmetric 2×2 matrix.
pub fn eigen_sym2(m: &Mat2) -> ((f64, f64), Vec2) {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let c = m[(1, 1)];
    let mean = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let l1 = mean + r;
    let l2 = mean - r;
    let v = if b.abs() > 1e-300 {
        Vec2::new(l1 - c, b).normalize()
    } else if a >= c {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(0.0, 1.0)
    };
    ((l1, l2), v)
}

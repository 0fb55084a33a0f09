//! Fixed-size linear algebra used by the filters.
//!
//! The error state mixes radians of latitude (~1e-7 per metre) with metres,
//! metres per second and radians, so covariance entries span twenty orders
//! of magnitude. Every inversion here is done on the Jacobi-equilibrated
//! matrix `S⁻¹ A S⁻¹` (unit diagonal) and mapped back, which keeps the
//! factorizations well conditioned without changing the result.

use nalgebra::{Cholesky, DMatrix, Matrix3, SMatrix, SVector, Vector3};

use crate::error::{NavError, Result};

pub const N: usize = 15;

pub type Mat15 = SMatrix<f64, 15, 15>;
pub type Vec15 = SVector<f64, 15>;

/// Relative jitter applied in equilibrated coordinates when conditioning.
pub const JITTER: f64 = 1e-12;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn symmetrize<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    (m + m.transpose()) * 0.5
}

fn diag_scale<const D: usize>(m: &SMatrix<f64, D, D>) -> SVector<f64, D> {
    SVector::from_fn(|i, _| {
        let d = m[(i, i)].abs();
        if d > 0.0 && d.is_finite() {
            d.sqrt()
        } else {
            1.0
        }
    })
}

fn scale_in<const D: usize>(m: &SMatrix<f64, D, D>, s: &SVector<f64, D>) -> SMatrix<f64, D, D> {
    SMatrix::from_fn(|i, j| m[(i, j)] / (s[i] * s[j]))
}

fn scale_out<const D: usize>(m: &SMatrix<f64, D, D>, s: &SVector<f64, D>) -> SMatrix<f64, D, D> {
    SMatrix::from_fn(|i, j| m[(i, j)] * s[i] * s[j])
}

fn all_finite<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Positive-definiteness test that is invariant to diagonal scaling.
pub fn is_positive_definite<const D: usize>(m: &SMatrix<f64, D, D>) -> bool {
    if !all_finite(m) || (0..D).any(|i| m[(i, i)] <= 0.0) {
        return false;
    }
    let s = diag_scale(m);
    Cholesky::new(scale_in(&symmetrize(m), &s)).is_some()
}

/// Inverse of a symmetric positive-definite matrix via equilibrated Cholesky.
pub fn spd_inverse<const D: usize>(m: &SMatrix<f64, D, D>) -> Result<SMatrix<f64, D, D>> {
    if !all_finite(m) {
        return Err(NavError::Numerical("non-finite matrix passed to spd_inverse".into()));
    }
    let s = diag_scale(m);
    let chol = Cholesky::new(scale_in(&symmetrize(m), &s))
        .ok_or_else(|| NavError::Numerical("matrix is not positive definite".into()))?;
    let inv = chol.inverse();
    let out = SMatrix::from_fn(|i, j| inv[(i, j)] / (s[i] * s[j]));
    Ok(symmetrize(&out))
}

/// Inverse of a symmetric positive-semidefinite matrix with a relative
/// ridge of [`JITTER`] in equilibrated coordinates. Zero rows/columns come
/// back as `1/JITTER`, i.e. "practically infinite" variance.
pub fn regularized_spd_inverse<const D: usize>(
    m: &SMatrix<f64, D, D>,
) -> Result<SMatrix<f64, D, D>> {
    if !all_finite(m) {
        return Err(NavError::Numerical("non-finite matrix passed to regularized inverse".into()));
    }
    let s = diag_scale(m);
    let mut scaled = scale_in(&symmetrize(m), &s);
    for i in 0..D {
        scaled[(i, i)] += JITTER;
    }
    let chol = Cholesky::new(scaled)
        .ok_or_else(|| NavError::Numerical("regularized matrix is not positive definite".into()))?;
    let inv = chol.inverse();
    Ok(symmetrize(&SMatrix::from_fn(|i, j| {
        inv[(i, j)] / (s[i] * s[j])
    })))
}

/// General inverse via LU with partial pivoting.
pub fn inverse<const D: usize>(m: &SMatrix<f64, D, D>) -> Result<SMatrix<f64, D, D>> {
    if !all_finite(m) {
        return Err(NavError::Numerical("non-finite matrix passed to inverse".into()));
    }
    m.try_inverse()
        .filter(all_finite)
        .ok_or_else(|| NavError::Numerical("matrix is singular".into()))
}

/// `(P + Pᵀ)/2`, plus a relative diagonal jitter when the result is not
/// positive definite.
///
/// The check and the repair both happen on the equilibrated matrix, so a
/// variance of 1e-15 rad² is never swamped by an absolute jitter. When the
/// equilibrated matrix fails Cholesky its eigenvalues are clamped to at
/// least [`JITTER`] and the matrix is rebuilt.
pub fn symmetrize_and_condition<const D: usize>(
    p: &SMatrix<f64, D, D>,
) -> Result<SMatrix<f64, D, D>> {
    if !all_finite(p) {
        return Err(NavError::Numerical("non-finite covariance".into()));
    }
    let sym = symmetrize(p);
    let s = diag_scale(&sym);
    let scaled = scale_in(&sym, &s);
    if (0..D).all(|i| sym[(i, i)] > 0.0) && Cholesky::new(scaled).is_some() {
        return Ok(sym);
    }
    let eig = DMatrix::from_column_slice(D, D, scaled.as_slice()).symmetric_eigen();
    let clamped = eig.eigenvalues.map(|l| l.max(JITTER));
    let rebuilt_dyn = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    let rebuilt = SMatrix::<f64, D, D>::from_column_slice(rebuilt_dyn.as_slice());
    let mut out = scale_out(&symmetrize(&rebuilt), &s);
    // Rebuilding can leave the result a hair short of PD after rescaling.
    let mut bump = JITTER;
    while !is_positive_definite(&out) {
        for i in 0..D {
            out[(i, i)] += bump * s[i] * s[i];
        }
        bump *= 10.0;
        if bump > 1.0 {
            return Err(NavError::Numerical("covariance could not be conditioned".into()));
        }
    }
    Ok(out)
}

/// Rotation matrix for a rotation vector (Rodrigues).
pub fn exp_so3(phi: &Vector3<f64>) -> Matrix3<f64> {
    let angle = phi.norm();
    let k = skew(phi);
    if angle < 1e-8 {
        return Matrix3::identity() + k + k * k * 0.5;
    }
    let a = angle.sin() / angle;
    let b = (1.0 - angle.cos()) / (angle * angle);
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation vector of a rotation matrix (inverse of [`exp_so3`] for angles below π).
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
    let sin = v.norm();
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = sin.atan2(cos);
    if sin < 1e-7 && cos > 0.0 {
        // angle/sin ≈ 1 + angle²/6
        return v * (1.0 + angle * angle / 6.0);
    }
    if angle > std::f64::consts::PI - 1e-6 {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
        return rot.scaled_axis();
    }
    v * (angle / sin)
}

/// Largest absolute asymmetry relative to the largest absolute entry.
pub fn relative_asymmetry<const D: usize>(m: &SMatrix<f64, D, D>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute norm when `b` is zero.
pub fn rel_frobenius<const R: usize, const C: usize>(
    a: &SMatrix<f64, R, C>,
    b: &SMatrix<f64, R, C>,
) -> f64 {
    let d = (a - b).norm();
    let n = b.norm();
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

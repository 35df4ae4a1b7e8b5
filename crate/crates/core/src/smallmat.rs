//! Fixed-shape 3x3 linear algebra kernel: polar decomposition, cofactor
//! determinants, determinants relative to volume densities, conjugation,
//! and the predicates used to recognize orthogonal, unimodular, and
//! symmetric-positive-definite maps.
//!
//! Everything in this module is pure; two runs on the same input agree
//! bitwise. The rest of the crate treats it as the numerical ground floor.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// 3x3 real matrix over the body chart.
pub type Mat3 = Matrix3<f64>;
/// 3-vector over the body chart.
pub type Vec3 = Vector3<f64>;
/// Index of a grid point (or of a groupoid object).
pub type PointId = usize;

/// Determinant magnitude at or below which a map is treated as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

/// Step size under which the polar iteration is declared converged.
const POLAR_STEP_TOL: f64 = 1e-14;
const POLAR_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MatError {
    #[error("singular matrix: |det| = {0:.3e} at or below 1e-12")]
    SingularMatrix(f64),
    #[error("volume density must be positive, got {0}")]
    NonpositiveDensity(f64),
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Orthogonal/stretch factors of an invertible map: `F = R U = V R`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarFactors {
    /// Orthogonal factor; `det R = sign(det F)`.
    pub r: Mat3,
    /// Right stretch, symmetric positive definite.
    pub u: Mat3,
    /// Left stretch, symmetric positive definite.
    pub v: Mat3,
}

/// An invertible linear map tagged with source and target point ids.
///
/// Arrows compose right-to-left: `a.compose(&b)` applies `b` first and is
/// defined when `b.dst == a.src`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameArrow {
    pub src: PointId,
    pub dst: PointId,
    pub map: Mat3,
}

impl FrameArrow {
    pub fn new(src: PointId, dst: PointId, map: Mat3) -> Self {
        FrameArrow { src, dst, map }
    }

    /// Identity loop at `p`.
    pub fn unity(p: PointId) -> Self {
        FrameArrow { src: p, dst: p, map: Mat3::identity() }
    }

    /// Inverse arrow, with endpoints swapped.
    pub fn inverse(&self) -> Result<FrameArrow, MatError> {
        let inv = invert(&self.map)?;
        Ok(FrameArrow { src: self.dst, dst: self.src, map: inv })
    }

    /// `self . other` (apply `other` first); `None` when the endpoints
    /// do not match.
    pub fn compose(&self, other: &FrameArrow) -> Option<FrameArrow> {
        if self.src != other.dst {
            return None;
        }
        Some(FrameArrow {
            src: other.src,
            dst: self.dst,
            map: self.map * other.map,
        })
    }
}

pub fn is_finite(m: &Mat3) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Cofactor-expansion determinant.
pub fn det3(m: &Mat3) -> f64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

/// Inverse, failing on `SINGULARITY_THRESHOLD`.
pub fn invert(m: &Mat3) -> Result<Mat3, MatError> {
    if !is_finite(m) {
        return Err(MatError::NonFinite);
    }
    let d = det3(m);
    if d.abs() <= SINGULARITY_THRESHOLD {
        return Err(MatError::SingularMatrix(d.abs()));
    }
    m.try_inverse().ok_or(MatError::SingularMatrix(d.abs()))
}

/// Largest entry magnitude.
pub fn max_abs(m: &Mat3) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Largest entry magnitude of `a - b`.
pub fn max_abs_diff(a: &Mat3, b: &Mat3) -> f64 {
    max_abs(&(a - b))
}

fn norm_1(m: &Mat3) -> f64 {
    (0..3)
        .map(|j| (0..3).map(|i| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
}

fn norm_inf(m: &Mat3) -> f64 {
    (0..3)
        .map(|i| (0..3).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
}

pub fn symmetrize(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

/// Polar decomposition `F = R U = V R` by the Newton averaging iteration
/// `X <- (X + X^-T)/2` with norm scaling, stopped when the step drops
/// under 1e-14 or after 50 iterations.
pub fn polar_decompose(f: &Mat3) -> Result<PolarFactors, MatError> {
    if !is_finite(f) {
        return Err(MatError::NonFinite);
    }
    let d = det3(f);
    if d.abs() <= SINGULARITY_THRESHOLD {
        return Err(MatError::SingularMatrix(d.abs()));
    }
    let mut x = *f;
    for _ in 0..POLAR_MAX_ITERS {
        let inv = x.try_inverse().ok_or(MatError::SingularMatrix(det3(&x).abs()))?;
        let inv_t = inv.transpose();
        // Norm scaling keeps the iteration count low for badly scaled input;
        // the factor tends to 1 as X approaches orthogonality.
        let gamma = ((norm_1(&inv) * norm_inf(&inv)) / (norm_1(&x) * norm_inf(&x))).powf(0.25);
        let next = (x * gamma + inv_t / gamma) * 0.5;
        let step = max_abs_diff(&next, &x);
        x = next;
        if step < POLAR_STEP_TOL {
            break;
        }
    }
    let r = x;
    let u = symmetrize(&(r.transpose() * f));
    let v = symmetrize(&(f * r.transpose()));
    Ok(PolarFactors { r, u, v })
}

/// Determinant of an arrow relative to volume densities at its endpoints:
/// the factor by which the arrow stretches volume measured against
/// `rho_src` at the source and `rho_dst` at the target.
pub fn det_rho(a: &FrameArrow, rho_src: f64, rho_dst: f64) -> Result<f64, MatError> {
    if !(rho_src > 0.0) {
        return Err(MatError::NonpositiveDensity(rho_src));
    }
    if !(rho_dst > 0.0) {
        return Err(MatError::NonpositiveDensity(rho_dst));
    }
    Ok(rho_dst / rho_src * det3(&a.map))
}

/// Scales an arrow by `|det_rho|^(-1/3)` so the result has volume-relative
/// determinant of magnitude 1. Idempotent.
pub fn unimodular_part(a: &FrameArrow, rho_src: f64, rho_dst: f64) -> Result<FrameArrow, MatError> {
    let d = det_rho(a, rho_src, rho_dst)?;
    if d.abs() <= SINGULARITY_THRESHOLD {
        return Err(MatError::SingularMatrix(d.abs()));
    }
    let scale = d.abs().powf(-1.0 / 3.0);
    Ok(FrameArrow { src: a.src, dst: a.dst, map: a.map * scale })
}

/// `A P A^-1`.
pub fn conjugate(a: &Mat3, p: &Mat3) -> Result<Mat3, MatError> {
    let inv = invert(a)?;
    Ok(a * p * inv)
}

/// `|F^T F - I|_max <= tol`.
pub fn is_orthogonal(f: &Mat3, tol: f64) -> bool {
    is_finite(f) && max_abs_diff(&(f.transpose() * f), &Mat3::identity()) <= tol
}

/// Symmetric within `tol` (max-entry norm) and strictly positive definite.
pub fn is_spd(s: &Mat3, tol: f64) -> bool {
    if !is_finite(s) || max_abs_diff(s, &s.transpose()) > tol {
        return false;
    }
    let m = symmetrize(s);
    // Sylvester: all leading principal minors strictly positive.
    let m1 = m[(0, 0)];
    let m2 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let m3 = det3(&m);
    m1 > 0.0 && m2 > 0.0 && m3 > 0.0
}

/// `||det F| - 1| <= tol` (both orientations count).
pub fn is_unimodular(f: &Mat3, tol: f64) -> bool {
    is_finite(f) && (det3(f).abs() - 1.0).abs() <= tol
}

/// Square root of a symmetric positive definite matrix, by spectral
/// decomposition.
pub fn sqrt_spd(s: &Mat3) -> Result<Mat3, MatError> {
    if !is_finite(s) {
        return Err(MatError::NonFinite);
    }
    let sym = symmetrize(s);
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues;
    for i in 0..3 {
        if vals[i] <= 0.0 {
            return Err(MatError::SingularMatrix(vals[i].abs()));
        }
        vals[i] = vals[i].sqrt();
    }
    let q = eig.eigenvectors;
    Ok(q * Mat3::from_diagonal(&vals) * q.transpose())
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn inv_sqrt_spd(s: &Mat3) -> Result<Mat3, MatError> {
    let root = sqrt_spd(s)?;
    invert(&root)
}

/// Rotation by `angle` about `axis` (need not be unit).
pub fn rotation_about(axis: &Vec3, angle: f64) -> Mat3 {
    let unit = nalgebra::Unit::new_normalize(*axis);
    *nalgebra::Rotation3::from_axis_angle(&unit, angle).matrix()
}

/// Diagonal matrix.
pub fn diag(a: f64, b: f64, c: f64) -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(a, b, c))
}

/// Orthonormal right-handed basis whose third column is `v` normalized.
/// The completion is deterministic and smooth while `|v_1|/|v|` stays on
/// one side of 0.9.
pub fn basis_with_third(v: &Vec3) -> Mat3 {
    let e3 = v.normalize();
    let seed = if e3[0].abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let b1 = (seed - e3 * e3.dot(&seed)).normalize();
    let b2 = e3.cross(&b1);
    Mat3::from_columns(&[b1, b2, e3])
}

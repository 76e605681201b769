//! Closed-form linear algebra for 2×2 symmetric matrices.
//!
//! Everything here works on `nalgebra` fixed-size types. Square roots and
//! eigenvalues use the trace/determinant formulas, so no iteration is ever
//! needed at this dimension.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Relative eigenvalue floor below which an SPD matrix is treated as singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// Tolerance on `|m01 - m10|` relative to `max(1, |m01|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn is_symmetric(m: &Mat2) -> bool {
    (m[(0, 1)] - m[(1, 0)]).abs() <= SYMMETRY_TOL * m[(0, 1)].abs().max(1.0)
}

/// Eigenvalues of a symmetric matrix, largest first.
pub fn sym_eigenvalues(m: &Mat2) -> (f64, f64) {
    let half_tr = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let r = half_diff.hypot(off);
    (half_tr + r, half_tr - r)
}

/// Unit eigenvector belonging to the largest eigenvalue of a symmetric matrix.
pub fn sym_major_axis(m: &Mat2) -> Vec2 {
    let a = m[(0, 0)];
    let c = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    Vec2::new(angle.cos(), angle.sin())
}

/// Checks symmetry and positive definiteness, returning the symmetrized matrix.
pub fn check_spd(m: &Mat2) -> Result<Mat2> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain(format!("matrix has non-finite entries: {m:?}")));
    }
    if !is_symmetric(m) {
        return Err(Error::Domain(format!(
            "matrix is not symmetric: off-diagonals {} and {}",
            m[(0, 1)],
            m[(1, 0)]
        )));
    }
    let sym = symmetrize(m);
    let (hi, lo) = sym_eigenvalues(&sym);
    let tr = sym.trace();
    if hi <= 0.0 || lo <= SINGULAR_RTOL * tr.abs() {
        let (which, value) = if hi <= 0.0 { ("largest", hi) } else { ("smallest", lo) };
        let sign = if value < 0.0 {
            "negative"
        } else if value == 0.0 {
            "zero"
        } else {
            "below the singular floor"
        };
        return Err(Error::Domain(format!(
            "matrix is not positive definite: {which} eigenvalue {value:e} is {sign}"
        )));
    }
    Ok(sym)
}

pub fn symmetrize(m: &Mat2) -> Mat2 {
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    Mat2::new(m[(0, 0)], off, off, m[(1, 1)])
}

/// Principal square root of an SPD matrix.
///
/// Uses `sqrt(M) = (M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M))`, which
/// is exact for 2×2 SPD input.
pub fn spd_sqrt(m: &Mat2) -> Result<Mat2> {
    let m = check_spd(m)?;
    Ok(spd_sqrt_unchecked(&m))
}

pub(crate) fn spd_sqrt_unchecked(m: &Mat2) -> Mat2 {
    let s = m.determinant().max(0.0).sqrt();
    let t = (m.trace() + 2.0 * s).sqrt();
    let r = (m + Mat2::identity() * s) / t;
    symmetrize(&r)
}

/// Inverse of the principal square root of an SPD matrix.
pub fn spd_inv_sqrt(m: &Mat2) -> Result<Mat2> {
    let r = spd_sqrt(m)?;
    Ok(sym_inverse(&r))
}

/// Trace of `sqrt(M)` for SPD `M`, i.e. `sqrt(tr M + 2 sqrt(det M))`.
pub(crate) fn trace_sqrt(tr: f64, det: f64) -> f64 {
    (tr + 2.0 * det.max(0.0).sqrt()).max(0.0).sqrt()
}

pub(crate) fn sym_inverse(m: &Mat2) -> Mat2 {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let inv = Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det;
    symmetrize(&inv)
}

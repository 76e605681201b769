use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, check_spd, Mat2, Vec2};

/// A bivariate normal component with mean in km and covariance in km².
///
/// Construction validates the covariance, so every value of this type has a
/// symmetric positive definite covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2 {
    mean: Vec2,
    cov: Mat2,
}

impl Gaussian2 {
    pub fn new(mean: Vec2, cov: Mat2) -> Result<Self> {
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("mean is not finite: {mean:?}")));
        }
        let cov = check_spd(&cov)?;
        Ok(Self { mean, cov })
    }

    /// Isotropic Gaussian with standard deviation `sigma` on each axis.
    pub fn isotropic(x: f64, y: f64, sigma: f64) -> Result<Self> {
        Self::new(Vec2::new(x, y), Mat2::identity() * (sigma * sigma))
    }

    /// Builds from raw parts `[mx, my]` and `[sxx, sxy, syy]`.
    pub fn from_parts(mean: [f64; 2], cov: [f64; 3]) -> Result<Self> {
        Self::new(
            Vec2::new(mean[0], mean[1]),
            Mat2::new(cov[0], cov[1], cov[1], cov[2]),
        )
    }

    pub fn mean(&self) -> Vec2 {
        self.mean
    }

    pub fn cov(&self) -> Mat2 {
        self.cov
    }

    /// `[sxx, sxy, syy]`
    pub fn cov_entries(&self) -> [f64; 3] {
        [self.cov[(0, 0)], self.cov[(0, 1)], self.cov[(1, 1)]]
    }

    pub fn det(&self) -> f64 {
        self.cov.determinant()
    }

    /// Density at the mean, `1 / (2π |Σ|^{1/2})`.
    pub fn peak_density(&self) -> f64 {
        1.0 / (2.0 * PI * self.det().sqrt())
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis_sq(&self, x: &Vec2) -> f64 {
        let d = x - self.mean;
        let c = &self.cov;
        let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(0, 1)];
        (c[(1, 1)] * d.x * d.x - 2.0 * c[(0, 1)] * d.x * d.y + c[(0, 0)] * d.y * d.y) / det
    }

    pub fn pdf(&self, x: &Vec2) -> f64 {
        self.peak_density() * (-0.5 * self.mahalanobis_sq(x)).exp()
    }

    /// Differential entropy `ln(2π) + 1 + ½ ln|Σ|`.
    pub fn entropy(&self) -> f64 {
        (2.0 * PI).ln() + 1.0 + 0.5 * self.det().ln()
    }

    /// Same mean, covariance multiplied by `alpha > 0`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.mean, self.cov * alpha)
    }

    /// Largest standard deviation along any axis.
    pub fn max_sigma(&self) -> f64 {
        linalg::sym_eigenvalues(&self.cov).0.sqrt()
    }
}

/// Plain serializable form used by the archive formats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianRecord {
    pub mean: [f64; 2],
    /// `[sxx, sxy, syy]`
    pub cov: [f64; 3],
}

impl From<&Gaussian2> for GaussianRecord {
    fn from(g: &Gaussian2) -> Self {
        Self { mean: [g.mean.x, g.mean.y], cov: g.cov_entries() }
    }
}

impl TryFrom<GaussianRecord> for Gaussian2 {
    type Error = Error;

    fn try_from(r: GaussianRecord) -> Result<Self> {
        Gaussian2::from_parts(r.mean, r.cov)
    }
}

/// Wasserstein-2 distance between two Gaussians (km).
///
/// The Bures term uses `tr (Σ₁^{½} Σ₂ Σ₁^{½})^{½} = sqrt(tr(Σ₁Σ₂) + 2 sqrt(|Σ₁||Σ₂|))`,
/// which makes the result exactly symmetric in its arguments.
pub fn w2(g1: &Gaussian2, g2: &Gaussian2) -> f64 {
    w2_sq(g1, g2).sqrt()
}

/// Squared Wasserstein-2 distance (km²).
pub fn w2_sq(g1: &Gaussian2, g2: &Gaussian2) -> f64 {
    if g1 == g2 {
        return 0.0;
    }
    let dm = (g1.mean - g2.mean).norm_squared();
    let (a, b) = (&g1.cov, &g2.cov);
    let tr_ab = a[(0, 0)] * b[(0, 0)] + 2.0 * a[(0, 1)] * b[(0, 1)] + a[(1, 1)] * b[(1, 1)];
    let cross = linalg::trace_sqrt(tr_ab, a.determinant() * b.determinant());
    let bures = a.trace() + b.trace() - 2.0 * cross;
    dm + bures.max(0.0)
}

/// Matrix `A` of the optimal affine map `x ↦ μ₂ + A (x − μ₁)` from `g1` to `g2`.
pub(crate) fn transport_matrix(g1: &Gaussian2, g2: &Gaussian2) -> Mat2 {
    let s1 = linalg::spd_sqrt_unchecked(&g1.cov);
    let s1_inv = linalg::sym_inverse(&s1);
    let inner = linalg::spd_sqrt_unchecked(&linalg::symmetrize(&(s1 * g2.cov * s1)));
    linalg::symmetrize(&(s1_inv * inner * s1_inv))
}

/// Point on the displacement interpolation from `g1` (τ = 0) to `g2` (τ = 1).
pub fn interpolate(g1: &Gaussian2, g2: &Gaussian2, tau: f64) -> Result<Gaussian2> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Argument(format!("interpolation parameter {tau} outside [0, 1]")));
    }
    if tau == 0.0 {
        return Ok(*g1);
    }
    let mean = g1.mean * (1.0 - tau) + g2.mean * tau;
    let s1 = linalg::spd_sqrt_unchecked(&g1.cov);
    let s1_inv = linalg::sym_inverse(&s1);
    let inner = linalg::spd_sqrt_unchecked(&linalg::symmetrize(&(s1 * g2.cov * s1)));
    let blend = g1.cov * (1.0 - tau) + inner * tau;
    let cov = linalg::symmetrize(&(s1_inv * blend * blend * s1_inv));
    Gaussian2::new(mean, cov)
}

/// Optimal transport map from `g1` to `g2` evaluated at `x`.
pub fn transport_map(g1: &Gaussian2, g2: &Gaussian2, x: &Vec2) -> Vec2 {
    if g1 == g2 {
        return *x;
    }
    g2.mean + transport_matrix(g1, g2) * (x - g1.mean)
}

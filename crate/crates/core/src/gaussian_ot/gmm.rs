use serde::{Deserialize, Serialize};

use super::gaussian::{interpolate, w2_sq, Gaussian2, GaussianRecord};
use super::transport::{solve_transport, Coupling};
use crate::error::{Error, Result};
use crate::linalg::Vec2;

/// Weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Coupling entries below this are dropped from geodesic mixtures.
pub const GEODESIC_DROP: f64 = 1e-12;

/// A finite Gaussian mixture on the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    components: Vec<Gaussian2>,
    weights: Vec<f64>,
}

impl Gmm {
    pub fn new(components: Vec<Gaussian2>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Validation("mixture needs at least one component".into()));
        }
        if components.len() != weights.len() {
            return Err(Error::Validation(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Validation(format!("mixture weight {w} is negative or not finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Validation(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components, weights })
    }

    pub fn single(g: Gaussian2) -> Self {
        Self { components: vec![g], weights: vec![1.0] }
    }

    /// Builds a mixture from nonnegative weights that are rescaled to sum to one.
    pub fn normalized(components: Vec<Gaussian2>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Validation("mixture weights have no mass".into()));
        }
        Self::new(components, weights.iter().map(|w| w / total).collect())
    }

    pub fn components(&self) -> &[Gaussian2] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Gaussian2, f64)> {
        self.components.iter().zip(self.weights.iter().copied())
    }

    pub fn pdf(&self, x: &Vec2) -> f64 {
        gmm_pdf(self, x)
    }

    /// Mixture mean.
    pub fn mean(&self) -> Vec2 {
        self.iter().fold(Vec2::zeros(), |acc, (g, w)| acc + g.mean() * w)
    }
}

/// Serializable mixture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmRecord {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianRecord>,
}

impl From<&Gmm> for GmmRecord {
    fn from(p: &Gmm) -> Self {
        Self {
            weights: p.weights.clone(),
            components: p.components.iter().map(GaussianRecord::from).collect(),
        }
    }
}

impl TryFrom<&GmmRecord> for Gmm {
    type Error = Error;

    fn try_from(r: &GmmRecord) -> Result<Self> {
        let components = r
            .components
            .iter()
            .map(|c| Gaussian2::try_from(*c))
            .collect::<Result<Vec<_>>>()?;
        Gmm::new(components, r.weights.clone())
    }
}

/// Mixture density at `x` (km⁻²).
pub fn gmm_pdf(p: &Gmm, x: &Vec2) -> f64 {
    p.iter().map(|(g, w)| w * g.pdf(x)).sum()
}

/// Optimal coupling between two mixtures together with the WG distance.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub coupling: Coupling,
    /// WG distance in km, the square root of the optimal transport cost.
    pub cost: f64,
}

/// Matrix of squared W2 distances between every pair of components, row-major.
pub fn w2_cost_matrix(p1: &Gmm, p2: &Gmm) -> Vec<f64> {
    p1.components
        .iter()
        .flat_map(|a| p2.components.iter().map(move |b| w2_sq(a, b)))
        .collect()
}

/// `sqrt(Σ W2²(g₁ⁱ, g₂ʲ) π(i,j))` for an arbitrary coupling `plan`.
pub fn wg_cost_with(p1: &Gmm, p2: &Gmm, plan: &Coupling) -> Result<f64> {
    check_plan_shape(p1, p2, plan)?;
    Ok(plan.weighted_sum(&w2_cost_matrix(p1, p2)).max(0.0).sqrt())
}

/// Wasserstein-GMM distance and its optimal coupling.
pub fn wg_distance(p1: &Gmm, p2: &Gmm) -> Result<(f64, TransportPlan)> {
    let cost = w2_cost_matrix(p1, p2);
    let sol = solve_transport(&cost, &p1.weights, &p2.weights)?;
    let d = sol.objective.max(0.0).sqrt();
    Ok((d, TransportPlan { coupling: sol.coupling, cost: d }))
}

fn check_plan_shape(p1: &Gmm, p2: &Gmm, plan: &Coupling) -> Result<()> {
    if plan.rows() != p1.len() || plan.cols() != p2.len() {
        return Err(Error::Argument(format!(
            "plan shape {}x{} does not match mixtures of size {} and {}",
            plan.rows(),
            plan.cols(),
            p1.len(),
            p2.len()
        )));
    }
    Ok(())
}

/// Point at `tau` on the geodesic between two mixtures under `plan`.
///
/// Each coupled pair contributes its Gaussian displacement interpolant with
/// the coupling mass as weight; pairs with mass below [`GEODESIC_DROP`] are
/// left out and the rest renormalised.
pub fn gmm_geodesic(p1: &Gmm, p2: &Gmm, plan: &Coupling, tau: f64) -> Result<Gmm> {
    check_plan_shape(p1, p2, plan)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Argument(format!("interpolation parameter {tau} outside [0, 1]")));
    }
    let mut components = Vec::new();
    let mut weights = Vec::new();
    for (i, a) in p1.components.iter().enumerate() {
        for (j, b) in p2.components.iter().enumerate() {
            let w = plan.get(i, j);
            if w >= GEODESIC_DROP {
                components.push(interpolate(a, b, tau)?);
                weights.push(w);
            }
        }
    }
    Gmm::normalized(components, weights)
}

use std::f64::consts::PI;

use super::Tessellation;
use crate::workspace::Workspace;

/// GCVT objective by raster quadrature with its Mahalanobis and mass parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcvtObjective {
    /// `Σ_i ∫_{V_i} −g ln g`.
    pub total: f64,
    /// `Σ_i ∫_{V_i} g · (x−μ_i)ᵀ Σ_i⁻¹ (x−μ_i)`.
    pub j_sigma: f64,
    /// `Σ_i ln(2π |Σ_i|^½) ∫_{V_i} g`.
    pub j_p: f64,
}

pub fn gcvt_objective(t: &Tessellation, w: &Workspace) -> GcvtObjective {
    let area = w.cell_area();
    let mut out = GcvtObjective { total: 0.0, j_sigma: 0.0, j_p: 0.0 };
    for (g, cell) in t.generators() {
        let log_norm = (2.0 * PI * g.det().sqrt()).ln();
        let (mut ent, mut maha, mut mass) = (0.0, 0.0, 0.0);
        for &c in cell.cells() {
            let x = w.cell_center(c);
            let d2 = g.mahalanobis_sq(&x);
            let p = (-0.5 * d2).exp() / (2.0 * PI * g.det().sqrt());
            if p > 0.0 {
                ent -= p * p.ln();
            }
            maha += p * d2;
            mass += p;
        }
        out.total += ent * area;
        out.j_sigma += maha * area;
        out.j_p += log_norm * mass * area;
    }
    out
}

//! Gaussian centroidal Voronoi tessellation of free space.

mod covariance;
mod io;
mod lloyd;
mod objective;
mod seeding;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use covariance::{
    optimize_cov_gcvt1, optimize_cov_gcvt2, ConstraintReport, ALPHA_CANDIDATES, PATTERN_MAX_EVALS,
};
pub use io::{TessellationFile, GeneratorRecord, TESSELLATION_SCHEMA};
pub use lloyd::{lloyd_cvt, voronoi_cells, LloydResult};
pub use objective::{gcvt_objective, GcvtObjective};
pub use seeding::seed_means;

use crate::error::{Error, Result};
use crate::gaussian_ot::Gaussian2;
use crate::linalg::{Mat2, Vec2};
use crate::workspace::{second_moment, RegionMask, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcvtParams {
    /// Number of generators.
    pub k: usize,
    pub eta_b: f64,
    pub eta_v: f64,
    /// km⁻².
    pub rho_max: f64,
    pub kappa: f64,
    pub lloyd_iters: usize,
    /// km.
    pub lloyd_tol: f64,
    pub seed: u64,
}

impl Default for GcvtParams {
    fn default() -> Self {
        Self {
            k: 100,
            eta_b: 0.05,
            eta_v: 0.3,
            rho_max: 0.7,
            kappa: 10.0,
            lloyd_iters: 100,
            lloyd_tol: 1e-3,
            seed: 0,
        }
    }
}

impl GcvtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if !(self.eta_b > 0.0 && self.eta_b < 1.0) {
            return bad(format!("eta_b = {} not in (0, 1)", self.eta_b));
        }
        if !(self.eta_v >= 0.0 && self.eta_v < 1.0) {
            return bad(format!("eta_v = {} not in [0, 1)", self.eta_v));
        }
        if !(self.rho_max > 0.0 && self.rho_max.is_finite()) {
            return bad(format!("rho_max = {} must be positive", self.rho_max));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa = {} must be positive", self.kappa));
        }
        if !(self.lloyd_tol >= 0.0) {
            return bad(format!("lloyd_tol = {} must be nonnegative", self.lloyd_tol));
        }
        Ok(())
    }

    /// Largest number of generators that may be dropped as infeasible.
    pub fn drop_limit(&self) -> usize {
        self.k / 10
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GcvtVariant {
    I,
    II,
}

impl std::fmt::Display for GcvtVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GcvtVariant::I => "I",
            GcvtVariant::II => "II",
        })
    }
}

impl std::str::FromStr for GcvtVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" => Ok(GcvtVariant::I),
            "II" | "ii" | "2" => Ok(GcvtVariant::II),
            _ => Err(Error::Validation(format!("unknown GCVT variant '{s}'"))),
        }
    }
}

/// Generators with their cells, the Lloyd objective trace, and the indices
/// (in Lloyd order) of generators dropped as infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct Tessellation {
    generators: Vec<(Gaussian2, RegionMask)>,
    objective_trace: Vec<f64>,
    dropped: Vec<usize>,
}

impl Tessellation {
    pub(crate) fn from_parts(
        generators: Vec<(Gaussian2, RegionMask)>,
        objective_trace: Vec<f64>,
        dropped: Vec<usize>,
    ) -> Self {
        Self { generators, objective_trace, dropped }
    }

    pub fn generators(&self) -> &[(Gaussian2, RegionMask)] {
        &self.generators
    }

    pub fn components(&self) -> Vec<Gaussian2> {
        self.generators.iter().map(|(g, _)| *g).collect()
    }

    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Checks the partition, mean-in-cell and constraint invariants.
    pub fn verify(&self, w: &Workspace, params: &GcvtParams) -> Result<()> {
        let mut owner = vec![usize::MAX; w.num_cells()];
        for (i, (g, cell)) in self.generators.iter().enumerate() {
            for &c in cell.cells() {
                if !w.is_free(c) {
                    return Err(Error::Validation(format!("cell {i} contains obstacle cell {c}")));
                }
                if owner[c] != usize::MAX {
                    return Err(Error::Validation(format!(
                        "grid cell {c} belongs to cells {} and {i}",
                        owner[c]
                    )));
                }
                owner[c] = i;
            }
            if !cell.contains_point(&g.mean(), w) {
                return Err(Error::Validation(format!("mean of cell {i} lies outside it")));
            }
            let r = ConstraintReport::measure(g, cell, w)?;
            if !r.feasible(params) {
                return Err(Error::Validation(format!(
                    "cell {i} violates constraints: p_B = {:.4}, mass = {:.4}, peak = {:.4}",
                    r.p_obstacle, r.mass, r.max_density
                )));
            }
        }
        if let Some(&c) = w.free_cells().iter().find(|&&c| owner[c] == usize::MAX) {
            return Err(Error::Validation(format!("free grid cell {c} is not covered")));
        }
        Ok(())
    }
}

/// Seeds, relaxes and fits covariances; see [`tessellate_sites`].
pub fn build_gcvt(w: &Workspace, params: &GcvtParams, variant: GcvtVariant) -> Result<Tessellation> {
    params.validate()?;
    let seeds = seed_means(w, params.k, params.seed)?;
    let lloyd = lloyd_cvt(w, &seeds, params)?;
    tessellate_sites(w, lloyd.sites, lloyd.objective_trace, params, variant)
}

/// Fits a covariance to every `(mean, cell)` site in parallel.
///
/// Infeasible sites are dropped and their grid cells handed to the nearest
/// retained mean; recipients are fitted again. More than
/// [`GcvtParams::drop_limit`] drops abort with [`Error::TooManyInfeasible`].
pub fn tessellate_sites(
    w: &Workspace,
    sites: Vec<(Vec2, RegionMask)>,
    objective_trace: Vec<f64>,
    params: &GcvtParams,
    variant: GcvtVariant,
) -> Result<Tessellation> {
    params.validate()?;
    let total = sites.len();
    let limit = total / 10;
    let sites: Vec<(Vec2, RegionMask)> =
        sites.into_iter().map(|(m, cell)| (snap_mean(m, &cell, w), cell)).collect();
    let mut fits: Vec<Option<Result<Gaussian2>>> = sites
        .par_iter()
        .map(|(m, cell)| Some(fit_cell(m, cell, params, w, variant)))
        .collect();
    let mut cells: Vec<RegionMask> = sites.iter().map(|(_, c)| c.clone()).collect();
    let means: Vec<Vec2> = sites.iter().map(|(m, _)| *m).collect();
    let mut dropped: Vec<usize> = Vec::new();

    loop {
        let newly: Vec<usize> = fits
            .iter()
            .enumerate()
            .filter(|(_, f)| matches!(f, Some(Err(_))))
            .map(|(i, _)| i)
            .collect();
        if newly.is_empty() {
            break;
        }
        for &i in &newly {
            if let Some(Err(e)) = &fits[i] {
                if !e.is_infeasibility() {
                    return Err(e.clone());
                }
                warn!("dropping generator {i}: {e}");
            }
            fits[i] = None;
            dropped.push(i);
        }
        if dropped.len() > limit {
            dropped.sort_unstable();
            return Err(Error::TooManyInfeasible { cells: dropped, total, limit });
        }
        let retained: Vec<usize> = (0..total).filter(|&i| fits[i].is_some()).collect();
        if retained.is_empty() {
            return Err(Error::TooManyInfeasible { cells: dropped, total, limit });
        }
        let recipients = merge_cells(&newly, &retained, &means, &mut cells, w);
        let refits: Vec<(usize, Result<Gaussian2>)> = recipients
            .par_iter()
            .map(|&r| (r, fit_cell(&means[r], &cells[r], params, w, variant)))
            .collect();
        for (r, f) in refits {
            fits[r] = Some(f);
        }
    }

    dropped.sort_unstable();
    let generators = fits
        .into_iter()
        .zip(cells)
        .filter_map(|(f, c)| f.map(|g| g.map(|g| (g, c))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tessellation { generators, objective_trace, dropped })
}

/// Moves a mean that left its own cell onto the nearest center of that cell.
fn snap_mean(m: Vec2, cell: &RegionMask, w: &Workspace) -> Vec2 {
    if cell.is_empty() || cell.contains_point(&m, w) {
        return m;
    }
    cell.cells()
        .iter()
        .map(|&c| w.cell_center(c))
        .min_by(|a, b| (a - m).norm_squared().total_cmp(&(b - m).norm_squared()))
        .unwrap_or(m)
}

/// Reassigns the grid cells of `gone` to the nearest retained mean and
/// returns the retained indices whose cells grew.
fn merge_cells(
    gone: &[usize],
    retained: &[usize],
    means: &[Vec2],
    cells: &mut [RegionMask],
    w: &Workspace,
) -> Vec<usize> {
    let mut extra: Vec<Vec<usize>> = vec![Vec::new(); means.len()];
    for &d in gone {
        for &c in cells[d].cells() {
            let x = w.cell_center(c);
            let mut best = retained[0];
            let mut best_d = f64::INFINITY;
            for &r in retained {
                let dist = (x - means[r]).norm_squared();
                if dist < best_d {
                    best_d = dist;
                    best = r;
                }
            }
            extra[best].push(c);
        }
        cells[d] = RegionMask::from_sorted(Vec::new());
    }
    let mut grown = Vec::new();
    for (r, add) in extra.into_iter().enumerate() {
        if add.is_empty() {
            continue;
        }
        let mut all = cells[r].cells().to_vec();
        all.extend(add);
        all.sort_unstable();
        cells[r] = RegionMask::from_sorted(all);
        grown.push(r);
    }
    grown
}

fn fit_cell(
    mu: &Vec2,
    cell: &RegionMask,
    params: &GcvtParams,
    w: &Workspace,
    variant: GcvtVariant,
) -> Result<Gaussian2> {
    let sigma0 = initial_covariance(cell, mu, params.kappa, w)?;
    let cov = match variant {
        GcvtVariant::II => optimize_cov_gcvt2(cell, mu, &sigma0, params, w)?.0,
        GcvtVariant::I => {
            let start = match optimize_cov_gcvt2(cell, mu, &sigma0, params, w) {
                Ok((cov, _)) => cov,
                Err(e) if e.is_infeasibility() => {
                    sigma0 * covariance::density_boundary_alpha(&sigma0, params.rho_max)
                }
                Err(e) => return Err(e),
            };
            optimize_cov_gcvt1(cell, mu, &start, params, w)?
        }
    };
    Gaussian2::new(*mu, cov)
}

/// `κ · ∫_V (x−μ)(x−μ)ᵀ dx`; a collinear cell is reported as infeasible.
fn initial_covariance(cell: &RegionMask, mu: &Vec2, kappa: f64, w: &Workspace) -> Result<Mat2> {
    match second_moment(cell, mu, w) {
        Ok(m) => Ok(m * kappa),
        Err(Error::Domain(msg)) => Err(Error::Infeasible { cell: None, binding: vec![msg] }),
        Err(e) => Err(e),
    }
}

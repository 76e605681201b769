//! Per-cell covariance optimization: minimise `|Σ|` for a fixed mean and cell
//! subject to the obstacle penalty, cell-mass and peak-density constraints.

use std::cell::Cell;
use std::f64::consts::PI;

use super::GcvtParams;
use crate::error::{Error, Result};
use crate::gaussian_ot::Gaussian2;
use crate::linalg::{check_spd, sym_inverse, Mat2, Vec2};
use crate::workspace::{mass_in_region, max_density_in_region, p_obstacle, RegionMask, Workspace};

/// Number of log-spaced scaling candidates scanned by GCVT-II.
pub const ALPHA_CANDIDATES: usize = 64;
pub const ALPHA_MIN: f64 = 1e-4;
/// Relative bracket width at which the α bisection stops.
pub const ALPHA_RTOL: f64 = 1e-6;

/// Evaluation budget of the GCVT-I pattern search per cell.
pub const PATTERN_MAX_EVALS: usize = 500;
pub const PENALTY_WEIGHT: f64 = 1e6;
const PATTERN_INITIAL_STEP: f64 = 0.5;
const PATTERN_MIN_STEP: f64 = 1e-6;
const DIAG_FLOOR: f64 = 1e-8;
const IMPROVE_RTOL: f64 = 1e-9;

/// Constraint values of one candidate component on its cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    pub p_obstacle: f64,
    pub mass: f64,
    pub max_density: f64,
}

impl ConstraintReport {
    pub fn measure(g: &Gaussian2, cell: &RegionMask, w: &Workspace) -> Result<Self> {
        Ok(Self {
            p_obstacle: p_obstacle(g, w),
            mass: mass_in_region(g, cell, w),
            max_density: max_density_in_region(g, cell, w)?,
        })
    }

    pub fn obstacle_ok(&self, p: &GcvtParams) -> bool {
        self.p_obstacle < p.eta_b
    }

    pub fn mass_ok(&self, p: &GcvtParams) -> bool {
        self.mass >= p.eta_v
    }

    pub fn density_ok(&self, p: &GcvtParams) -> bool {
        self.max_density <= p.rho_max
    }

    pub fn feasible(&self, p: &GcvtParams) -> bool {
        self.obstacle_ok(p) && self.mass_ok(p) && self.density_ok(p)
    }

    /// Sum of squared constraint violations.
    fn violation(&self, p: &GcvtParams) -> f64 {
        let b = (self.p_obstacle - p.eta_b).max(0.0);
        let v = (p.eta_v - self.mass).max(0.0);
        let r = (self.max_density - p.rho_max).max(0.0);
        b * b + v * v + r * r
    }

    fn violated_names(&self, p: &GcvtParams) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.obstacle_ok(p) {
            out.push("obstacle penalty");
        }
        if !self.mass_ok(p) {
            out.push("cell mass");
        }
        if !self.density_ok(p) {
            out.push("peak density");
        }
        out
    }
}

struct CellProblem<'a> {
    cell: &'a RegionMask,
    mu: Vec2,
    params: &'a GcvtParams,
    w: &'a Workspace,
}

impl CellProblem<'_> {
    fn measure(&self, cov: &Mat2) -> Option<ConstraintReport> {
        let g = Gaussian2::new(self.mu, *cov).ok()?;
        ConstraintReport::measure(&g, self.cell, self.w).ok()
    }
}

fn check_inputs(cell: &RegionMask, mu: &Vec2, w: &Workspace) -> Result<()> {
    if cell.is_empty() {
        return Err(Error::Argument("covariance optimization on an empty cell".into()));
    }
    if !cell.contains_point(mu, w) {
        return Err(Error::Argument(format!("mean ({}, {}) lies outside its cell", mu.x, mu.y)));
    }
    Ok(())
}

fn infeasible(binding: Vec<String>) -> Error {
    Error::Infeasible { cell: None, binding }
}

/// GCVT-II: `Σ(α) = α · sigma0` with the smallest feasible `α ∈ (0, 1]`.
///
/// Scans [`ALPHA_CANDIDATES`] log-spaced values upwards from [`ALPHA_MIN`] for
/// the density floor, bisects onto it, and if the floor violates another
/// constraint continues the scan to the first feasible candidate above it.
pub fn optimize_cov_gcvt2(
    cell: &RegionMask,
    mu: &Vec2,
    sigma0: &Mat2,
    params: &GcvtParams,
    w: &Workspace,
) -> Result<(Mat2, f64)> {
    check_inputs(cell, mu, w)?;
    let sigma0 = check_spd(sigma0)?;
    let problem = CellProblem { cell, mu: *mu, params, w };
    let report = |alpha: f64| problem.measure(&(sigma0 * alpha));
    let dense = |alpha: f64| report(alpha).is_some_and(|r| r.density_ok(params));
    let feasible = |alpha: f64| report(alpha).is_some_and(|r| r.feasible(params));

    let ratio = (1.0 / ALPHA_MIN).powf(1.0 / (ALPHA_CANDIDATES - 1) as f64);
    let candidates: Vec<f64> = (0..ALPHA_CANDIDATES)
        .map(|i| if i == ALPHA_CANDIDATES - 1 { 1.0 } else { ALPHA_MIN * ratio.powi(i as i32) })
        .collect();
    let infeasible_here = || infeasible(scan_diagnosis(&problem, &sigma0, &candidates));

    // smallest α meeting the density bound, the only constraint that grows with α
    let Some(first_dense) = candidates.iter().position(|&a| dense(a)) else {
        return Err(infeasible_here());
    };
    let floor = match first_dense {
        0 => candidates[0],
        i => bisect(candidates[i - 1], candidates[i], dense),
    };
    if feasible(floor) {
        return Ok((sigma0 * floor, floor));
    }
    let mut prev = floor;
    for &a in candidates.iter().filter(|&&a| a > floor) {
        if feasible(a) {
            let hi = bisect(prev, a, feasible);
            return Ok((sigma0 * hi, hi));
        }
        prev = a;
    }
    Err(infeasible_here())
}

/// Smallest point of `(lo, hi]` where `ok` holds, assuming `ok(hi)` and a
/// single switch inside the bracket.
fn bisect(mut lo: f64, mut hi: f64, ok: impl Fn(f64) -> bool) -> f64 {
    while (hi - lo) > ALPHA_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Names the constraints that no scanned candidate satisfied, or all three if
/// each holds somewhere but never jointly.
fn scan_diagnosis(problem: &CellProblem, sigma0: &Mat2, candidates: &[f64]) -> Vec<String> {
    let reports: Vec<ConstraintReport> = candidates
        .iter()
        .filter_map(|&a| problem.measure(&(sigma0 * a)))
        .collect();
    let p = problem.params;
    let mut names = Vec::new();
    if !reports.iter().any(|r| r.obstacle_ok(p)) {
        names.push(format!("obstacle penalty never below {}", p.eta_b));
    }
    if !reports.iter().any(|r| r.mass_ok(p)) {
        names.push(format!("cell mass never reaches {}", p.eta_v));
    }
    if !reports.iter().any(|r| r.density_ok(p)) {
        names.push(format!("peak density never within {}", p.rho_max));
    }
    if names.is_empty() {
        names.push("obstacle penalty, cell mass and peak density not jointly satisfiable".into());
    }
    names
}

/// Lower-triangular factor `L` of `Σ⁻¹ = Lᵀ L`, parametrised as
/// `(ln l₁₁, l₂₁ / l₂₂, ln l₂₂)` so both diagonal entries stay positive.
fn factor_params(cov: &Mat2) -> [f64; 3] {
    let p = sym_inverse(cov);
    let l22 = p[(1, 1)].sqrt();
    let l21 = p[(0, 1)] / l22;
    let l11 = (p[(0, 0)] - l21 * l21).max(DIAG_FLOOR * DIAG_FLOOR).sqrt();
    [l11.ln(), l21 / l22, l22.ln()]
}

fn cov_from_params(x: &[f64; 3]) -> Mat2 {
    let l11 = x[0].exp().max(DIAG_FLOOR);
    let l22 = x[2].exp().max(DIAG_FLOOR);
    let l21 = x[1] * l22;
    let precision = Mat2::new(l11 * l11 + l21 * l21, l21 * l22, l21 * l22, l22 * l22);
    sym_inverse(&precision)
}

/// GCVT-I: compass pattern search over the Cholesky factor of `Σ⁻¹`,
/// minimising `|Σ|` plus an exterior quadratic penalty.
///
/// `start` is usually the GCVT-II solution. The best feasible iterate is
/// returned, so a feasible start is never made worse.
pub fn optimize_cov_gcvt1(
    cell: &RegionMask,
    mu: &Vec2,
    start: &Mat2,
    params: &GcvtParams,
    w: &Workspace,
) -> Result<Mat2> {
    check_inputs(cell, mu, w)?;
    let start = check_spd(start)?;
    let problem = CellProblem { cell, mu: *mu, params, w };

    let mut best: Option<(f64, Mat2)> = None;
    let mut last_report = None;
    let evals = Cell::new(0usize);
    let mut eval = |cov: &Mat2, best: &mut Option<(f64, Mat2)>| -> f64 {
        evals.set(evals.get() + 1);
        let det = cov.determinant();
        match problem.measure(cov) {
            Some(r) => {
                if r.feasible(params) && best.as_ref().is_none_or(|(d, _)| det < *d * (1.0 - IMPROVE_RTOL)) {
                    *best = Some((det, *cov));
                }
                last_report = Some(r);
                det + PENALTY_WEIGHT * r.violation(params)
            }
            None => f64::INFINITY,
        }
    };

    let mut x = factor_params(&start);
    let mut fx = eval(&start, &mut best);
    let mut step = PATTERN_INITIAL_STEP;
    'search: while step >= PATTERN_MIN_STEP {
        let mut improved = false;
        for axis in 0..3 {
            for dir in [1.0, -1.0] {
                if evals.get() >= PATTERN_MAX_EVALS {
                    break 'search;
                }
                let mut y = x;
                y[axis] += dir * step;
                let fy = eval(&cov_from_params(&y), &mut best);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
            if improved {
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    match best {
        Some((_, cov)) => Ok(cov),
        None => {
            let names = last_report
                .map(|r| r.violated_names(params).into_iter().map(String::from).collect())
                .unwrap_or_else(|| vec!["no valid covariance evaluated".to_string()]);
            Err(infeasible(names))
        }
    }
}

/// Scaling of `sigma0` at which its peak density equals `rho_max`, capped at 1.
pub(crate) fn density_boundary_alpha(sigma0: &Mat2, rho_max: f64) -> f64 {
    (1.0 / (2.0 * PI * rho_max * sigma0.determinant().sqrt())).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workspace::{rasterize, Polygon};

    fn params(eta_v: f64, rho_max: f64) -> GcvtParams {
        GcvtParams { eta_v, rho_max, ..GcvtParams::default() }
    }

    fn square_cell(w: &Workspace, center: Vec2, half: f64) -> RegionMask {
        let cells = (0..w.num_cells())
            .filter(|&k| {
                let c = w.cell_center(k) - center;
                c.x.abs() < half && c.y.abs() < half && w.is_free(k)
            })
            .collect();
        RegionMask::new(cells, w).unwrap()
    }

    #[test]
    fn density_binds_without_obstacles() {
        let w = rasterize(10.0, 10.0, vec![], 0.1).unwrap();
        let mu = Vec2::new(5.05, 5.05);
        let cell = square_cell(&w, mu, 1.5);
        let s = 2.0;
        let p = params(0.0, 0.7);
        let (cov, alpha) =
            optimize_cov_gcvt2(&cell, &mu, &(Mat2::identity() * s), &p, &w).unwrap();
        let expected = 1.0 / (2.0 * PI * 0.7 * s);
        assert!((alpha - expected).abs() <= 2e-6 * expected, "{alpha} vs {expected}");
        assert!((cov - Mat2::identity() * s * alpha).norm() < 1e-15);
    }

    #[test]
    fn obstacle_shrinks_alpha_below_one() {
        let w = rasterize(10.0, 10.0, vec![Polygon::rect(6.0, 0.0, 10.0, 10.0)], 0.1).unwrap();
        let mu = Vec2::new(4.05, 5.05);
        let cell = square_cell(&w, mu, 1.5);
        let sigma0 = Mat2::identity() * 4.0;
        let p = GcvtParams { eta_v: 0.3, rho_max: 0.7, ..GcvtParams::default() };
        // oracle: the unscaled component violates the obstacle constraint
        let full = Gaussian2::new(mu, sigma0).unwrap();
        assert!(p_obstacle(&full, &w) >= p.eta_b);
        let (cov, alpha) = optimize_cov_gcvt2(&cell, &mu, &sigma0, &p, &w).unwrap();
        assert!(alpha < 1.0);
        let g = Gaussian2::new(mu, cov).unwrap();
        assert!(ConstraintReport::measure(&g, &cell, &w).unwrap().feasible(&p));
    }

    #[test]
    fn conflicting_thresholds_are_infeasible() {
        let w = rasterize(10.0, 10.0, vec![], 0.1).unwrap();
        let mu = Vec2::new(5.05, 5.05);
        let cell = RegionMask::new(vec![w.cell_at(&mu).unwrap()], &w).unwrap();
        // a single 0.01 km² cell cannot hold 30% of a component whose peak is ≤ 0.01
        let p = params(0.3, 0.01);
        let err = optimize_cov_gcvt2(&cell, &mu, &(Mat2::identity() * 0.5), &p, &w).unwrap_err();
        match err {
            Error::Infeasible { binding, .. } => {
                assert!(binding.iter().any(|b| b.contains("mass") || b.contains("density")))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gcvt1_reaches_density_boundary_and_stays_isotropic() {
        let w = rasterize(10.0, 10.0, vec![], 0.1).unwrap();
        let mu = Vec2::new(5.05, 5.05);
        // the mass bound on a 0.9 km square only admits near-isotropic shapes
        let cell = square_cell(&w, mu, 0.45);
        let p = params(0.42, 0.7);
        let sigma0 = Mat2::identity() * 3.0;
        let (ii, _) = optimize_cov_gcvt2(&cell, &mu, &sigma0, &p, &w).unwrap();
        let i = optimize_cov_gcvt1(&cell, &mu, &ii, &p, &w).unwrap();
        let target = (1.0 / (2.0 * PI * 0.7)).powi(2);
        assert!((i.determinant() - target).abs() < 0.01 * target);
        assert!(i.determinant() <= ii.determinant() + 1e-9);
        let (hi, lo) = crate::linalg::sym_eigenvalues(&i);
        assert!(hi / lo < 1.05, "{hi} {lo}");
    }

    #[test]
    fn gcvt1_keeps_an_optimal_start() {
        let w = rasterize(10.0, 10.0, vec![], 0.1).unwrap();
        let mu = Vec2::new(5.05, 5.05);
        let cell = square_cell(&w, mu, 1.5);
        let p = params(0.0, 0.7);
        let start = Mat2::identity() * (1.0 + 1e-12) / (2.0 * PI * 0.7);
        let got = optimize_cov_gcvt1(&cell, &mu, &start, &p, &w).unwrap();
        assert!((got - start).norm() < 1e-9);
    }

    #[test]
    fn factor_round_trip() {
        let cov = Mat2::new(2.0, 0.3, 0.3, 0.5);
        let back = cov_from_params(&factor_params(&cov));
        assert!((back - cov).norm() < 1e-12);
        let sigma0 = Mat2::identity() * 4.0;
        let a = density_boundary_alpha(&sigma0, 0.7);
        assert!((a - 1.0 / (2.0 * PI * 0.7 * 4.0)).abs() < 1e-15);
    }
}

use rayon::prelude::*;

use super::GcvtParams;
use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::workspace::{RegionMask, Workspace};

/// Outcome of the uniform-density Lloyd iteration.
#[derive(Debug, Clone)]
pub struct LloydResult {
    /// Generator positions with their Voronoi cells over free space.
    pub sites: Vec<(Vec2, RegionMask)>,
    /// CVT objective after every assignment step, non-increasing.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// Generators that were re-seeded because their cell went empty.
    pub reseeded: usize,
}

/// Index of the nearest mean for every free cell; ties go to the lower index.
fn assign(points: &[Vec2], means: &[Vec2]) -> Vec<usize> {
    points
        .par_iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, m) in means.iter().enumerate() {
                let d = (p - m).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn objective(points: &[Vec2], labels: &[usize], means: &[Vec2], cell_area: f64) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| (p - means[l]).norm_squared())
        .sum::<f64>()
        * cell_area
}

/// Moves generators of empty cells onto the free cells farthest from their
/// current generator, then reassigns. Returns how many generators moved.
fn repair_empty(points: &[Vec2], means: &mut [Vec2], labels: &mut Vec<usize>) -> usize {
    let mut moved = 0;
    for _ in 0..means.len() {
        let mut counts = vec![0usize; means.len()];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let empty: Vec<usize> = (0..means.len()).filter(|&i| counts[i] == 0).collect();
        if empty.is_empty() {
            break;
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        let dist = |k: usize| (points[k] - means[labels[k]]).norm_squared();
        order.sort_by(|&a, &b| dist(b).total_cmp(&dist(a)).then(a.cmp(&b)));
        for (g, &cell) in empty.iter().zip(order.iter()) {
            means[*g] = points[cell];
            moved += 1;
        }
        *labels = assign(points, means);
    }
    moved
}

/// Euclidean Voronoi partition of the free cells among `means`.
pub fn voronoi_cells(w: &Workspace, means: &[Vec2]) -> Vec<RegionMask> {
    let points: Vec<Vec2> = w.free_cells().iter().map(|&c| w.cell_center(c)).collect();
    let labels = assign(&points, means);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); means.len()];
    for (&cell, &l) in w.free_cells().iter().zip(&labels) {
        members[l].push(cell);
    }
    members.into_iter().map(RegionMask::from_sorted).collect()
}

/// Uniform-density Lloyd iteration on the free cells starting from `means0`.
pub fn lloyd_cvt(w: &Workspace, means0: &[Vec2], params: &GcvtParams) -> Result<LloydResult> {
    if means0.is_empty() {
        return Err(Error::Argument("Lloyd iteration needs at least one generator".into()));
    }
    if means0.len() > w.free_cells().len() {
        return Err(Error::Argument(format!(
            "{} generators for {} free cells",
            means0.len(),
            w.free_cells().len()
        )));
    }
    for (i, m) in means0.iter().enumerate() {
        if !w.cell_at(m).is_some_and(|c| w.is_free(c)) {
            return Err(Error::Argument(format!("initial generator {i} is not in free space")));
        }
    }
    let points: Vec<Vec2> = w.free_cells().iter().map(|&c| w.cell_center(c)).collect();
    let k = means0.len();
    let mut means = means0.to_vec();
    let mut trace = Vec::new();
    let mut reseeded = 0;
    let mut iterations = 0;
    let mut labels = assign(&points, &means);
    reseeded += repair_empty(&points, &mut means, &mut labels);

    while iterations < params.lloyd_iters {
        trace.push(objective(&points, &labels, &means, w.cell_area()));
        let mut sums = vec![Vec2::zeros(); k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l] += p;
            counts[l] += 1;
        }
        let mut shift = 0.0f64;
        for i in 0..k {
            let c = sums[i] / counts[i] as f64;
            shift = shift.max((c - means[i]).norm());
            means[i] = c;
        }
        iterations += 1;
        labels = assign(&points, &means);
        reseeded += repair_empty(&points, &mut means, &mut labels);
        if shift < params.lloyd_tol {
            break;
        }
    }
    trace.push(objective(&points, &labels, &means, w.cell_area()));

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (&cell, &l) in w.free_cells().iter().zip(&labels) {
        members[l].push(cell);
    }
    let sites = means
        .into_iter()
        .zip(members)
        .map(|(m, cells)| (m, RegionMask::from_sorted(cells)))
        .collect();
    Ok(LloydResult { sites, objective_trace: trace, iterations, reseeded })
}

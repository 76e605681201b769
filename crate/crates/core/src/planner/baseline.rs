use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaussian_ot::Gaussian2;
use crate::gcvt::voronoi_cells;
use crate::linalg::{Mat2, Vec2};
use crate::workspace::{RegionMask, Workspace};

/// About `k` components on a uniform grid over the whole ROI, obstacles
/// included, sharing the isotropic covariance whose peak density is `rho_max`.
pub fn grid_collocation(w: &Workspace, k: usize, rho_max: f64) -> Result<Vec<Gaussian2>> {
    if k == 0 {
        return Err(Error::Argument("grid baseline needs at least one component".into()));
    }
    let nx = ((k as f64 * w.width() / w.height()).sqrt().round() as usize).max(1);
    let ny = ((k as f64 / nx as f64).round() as usize).max(1);
    let cov = Mat2::identity() / (2.0 * PI * rho_max);
    let (sx, sy) = (w.width() / nx as f64, w.height() / ny as f64);
    (0..ny)
        .flat_map(|r| (0..nx).map(move |c| Vec2::new((c as f64 + 0.5) * sx, (r as f64 + 0.5) * sy)))
        .map(|m| Gaussian2::new(m, cov))
        .collect()
}

/// `k` distinct free cells drawn uniformly, each with its Voronoi cell.
pub fn random_sites(w: &Workspace, k: usize, seed: u64) -> Result<Vec<(Vec2, RegionMask)>> {
    let free = w.free_cells();
    if k == 0 || k > free.len() {
        return Err(Error::Argument(format!("cannot draw {k} sites from {} free cells", free.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, free.len(), k).into_vec();
    picks.sort_unstable();
    let means: Vec<Vec2> = picks.iter().map(|&i| w.cell_center(free[i])).collect();
    let cells = voronoi_cells(w, &means);
    Ok(means.into_iter().zip(cells).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workspace::rasterize;

    #[test]
    fn grid_covers_the_roi() {
        let w = rasterize(20.0, 16.0, vec![], 0.1).unwrap();
        let g = grid_collocation(&w, 100, 0.7).unwrap();
        assert_eq!(g.len(), 99);
        assert!(g.iter().all(|c| (c.peak_density() - 0.7).abs() < 1e-12));
    }

    #[test]
    fn random_sites_are_deterministic_and_partition() {
        let w = rasterize(10.0, 8.0, vec![], 0.1).unwrap();
        let a = random_sites(&w, 7, 5).unwrap();
        assert_eq!(a, random_sites(&w, 7, 5).unwrap());
        assert_ne!(a, random_sites(&w, 7, 6).unwrap());
        let total: usize = a.iter().map(|(_, c)| c.len()).sum();
        assert_eq!(total, w.free_cells().len());
        assert!(a.iter().all(|(m, c)| c.contains_point(m, &w)));
    }
}

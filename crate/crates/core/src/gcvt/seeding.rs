use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::workspace::Workspace;

/// k-means++ seeding over free-cell centers.
///
/// The first seed is uniform over free cells; every further seed is drawn with
/// probability proportional to its squared distance to the nearest seed so far.
pub fn seed_means(w: &Workspace, k: usize, seed: u64) -> Result<Vec<Vec2>> {
    let free = w.free_cells();
    if k == 0 || k > free.len() {
        return Err(Error::Argument(format!(
            "cannot seed {k} means on {} free cells",
            free.len()
        )));
    }
    let points: Vec<Vec2> = free.iter().map(|&c| w.cell_center(c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let mut chosen = vec![first];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    acc += d;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("positive total implies a candidate")
        } else {
            // every point coincides with a seed already; cannot happen for
            // distinct cell centers with k ≤ free cells
            return Err(Error::Argument("ran out of distinct seed candidates".into()));
        };
        chosen.push(next);
        let p = points[next];
        for (d, q) in d2.iter_mut().zip(&points) {
            *d = d.min((q - p).norm_squared());
        }
    }
    Ok(chosen.into_iter().map(|i| points[i]).collect())
}

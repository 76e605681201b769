//! Rectangular region of interest with polygonal obstacles, rasterized on a
//! square grid, plus midpoint-rule integrals of Gaussian densities over it.
//!
//! Cell `(r, c)` covers `[c·h, (c+1)·h] × [r·h, (r+1)·h]` and has flat index
//! `r · ncols + c`. A cell is an obstacle cell iff its center lies inside or on
//! the boundary of some obstacle polygon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_ot::{Gaussian2, Gmm};
use crate::linalg::{Mat2, Vec2};

/// Gaussians are integrated over a box of this many standard deviations.
const QUADRATURE_RADIUS_SIGMAS: f64 = 9.0;

/// Simple polygon given by its vertices in order (km).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Self { vertices }
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd membership; points on an edge count as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if on_segment(p, a, b) {
                return true;
            }
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a[0] * b[1] - b[0] * a[1]).sum::<f64>().abs()
    }

    fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.vertices[i] == self.vertices[j] {
                    return false;
                }
            }
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if adjacent {
                    // adjacent edges may only share their common vertex
                    let shared = if j == i + 1 { b } else { a };
                    let (p, q) = if j == i + 1 { (a, d) } else { (c, b) };
                    if cross(sub(p, shared), sub(q, shared)) == 0.0
                        && dot(sub(p, shared), sub(q, shared)) > 0.0
                    {
                        return false;
                    }
                } else if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        self.area() > 0.0
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let scale = dot(ab, ab).sqrt().max(1.0);
    cross(ab, ap).abs() <= 1e-12 * scale * scale && dot(ap, ab) >= 0.0 && dot(ap, ab) <= dot(ab, ab)
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(sub(b, a), sub(c, a));
    let d2 = cross(sub(b, a), sub(d, a));
    let d3 = cross(sub(d, c), sub(a, c));
    let d4 = cross(sub(d, c), sub(b, c));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(c, a, b) || on_segment(d, a, b) || on_segment(a, c, d) || on_segment(b, c, d)
}

/// The rasterized region of interest.
#[derive(Debug, Clone)]
pub struct Workspace {
    width: f64,
    height: f64,
    grid_h: f64,
    ncols: usize,
    nrows: usize,
    obstacles: Vec<Polygon>,
    free: Vec<bool>,
    free_cells: Vec<usize>,
    obstacle_cells: Vec<usize>,
    /// Per row, inclusive column ranges of obstacle cells.
    obstacle_runs: Vec<Vec<(usize, usize)>>,
}

/// Builds the free-space raster for a `width × height` ROI.
pub fn rasterize(width: f64, height: f64, obstacles: Vec<Polygon>, grid_h: f64) -> Result<Workspace> {
    Workspace::new(width, height, obstacles, grid_h)
}

impl Workspace {
    pub fn new(width: f64, height: f64, obstacles: Vec<Polygon>, grid_h: f64) -> Result<Self> {
        for (name, v) in [("width", width), ("height", height), ("grid_h", grid_h)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if grid_h > width.min(height) / 10.0 {
            return Err(Error::Validation(format!(
                "grid_h {grid_h} exceeds a tenth of the shorter ROI side"
            )));
        }
        for (idx, poly) in obstacles.iter().enumerate() {
            if poly.vertices.iter().any(|v| {
                !(v[0].is_finite() && v[1].is_finite())
                    || v[0] < 0.0
                    || v[0] > width
                    || v[1] < 0.0
                    || v[1] > height
            }) {
                return Err(Error::Validation(format!("obstacle {idx} leaves the ROI")));
            }
            if !poly.is_simple() {
                return Err(Error::Validation(format!("obstacle {idx} is not a simple polygon")));
            }
        }
        let ncols = (width / grid_h).round().max(1.0) as usize;
        let nrows = (height / grid_h).round().max(1.0) as usize;
        let mut free = vec![true; ncols * nrows];
        for poly in &obstacles {
            let (lo, hi) = poly.bbox();
            let c0 = ((lo[0] / grid_h - 0.5).floor().max(0.0)) as usize;
            let c1 = (((hi[0] / grid_h - 0.5).ceil()).max(0.0) as usize).min(ncols - 1);
            let r0 = ((lo[1] / grid_h - 0.5).floor().max(0.0)) as usize;
            let r1 = (((hi[1] / grid_h - 0.5).ceil()).max(0.0) as usize).min(nrows - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let p = [(c as f64 + 0.5) * grid_h, (r as f64 + 0.5) * grid_h];
                    if poly.contains(p) {
                        free[r * ncols + c] = false;
                    }
                }
            }
        }
        let free_cells: Vec<usize> = (0..free.len()).filter(|&k| free[k]).collect();
        if free_cells.is_empty() {
            return Err(Error::Validation("no free cells".into()));
        }
        let obstacle_cells = (0..free.len()).filter(|&k| !free[k]).collect();
        let obstacle_runs = (0..nrows)
            .map(|r| {
                let row = &free[r * ncols..(r + 1) * ncols];
                let mut runs = Vec::new();
                let mut c = 0;
                while c < ncols {
                    if row[c] {
                        c += 1;
                        continue;
                    }
                    let start = c;
                    while c < ncols && !row[c] {
                        c += 1;
                    }
                    runs.push((start, c - 1));
                }
                runs
            })
            .collect();
        Ok(Self {
            width,
            height,
            grid_h,
            ncols,
            nrows,
            obstacles,
            free,
            free_cells,
            obstacle_cells,
            obstacle_runs,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn grid_h(&self) -> f64 {
        self.grid_h
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn num_cells(&self) -> usize {
        self.free.len()
    }

    pub fn cell_area(&self) -> f64 {
        self.grid_h * self.grid_h
    }

    pub fn obstacles(&self) -> &[Polygon] {
        &self.obstacles
    }

    pub fn is_free(&self, cell: usize) -> bool {
        self.free[cell]
    }

    pub fn free_mask(&self) -> &[bool] {
        &self.free
    }

    pub fn free_cells(&self) -> &[usize] {
        &self.free_cells
    }

    pub fn obstacle_cells(&self) -> &[usize] {
        &self.obstacle_cells
    }

    pub fn cell_center(&self, cell: usize) -> Vec2 {
        let (r, c) = (cell / self.ncols, cell % self.ncols);
        Vec2::new((c as f64 + 0.5) * self.grid_h, (r as f64 + 0.5) * self.grid_h)
    }

    /// Raster cell containing `p`, if `p` lies inside the ROI.
    pub fn cell_at(&self, p: &Vec2) -> Option<usize> {
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height) {
            return None;
        }
        let c = ((p.x / self.grid_h) as usize).min(self.ncols - 1);
        let r = ((p.y / self.grid_h) as usize).min(self.nrows - 1);
        Some(r * self.ncols + c)
    }

    pub fn contains_point(&self, p: &Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    /// Row/column index window covering `radius` km around `center`.
    fn window(&self, center: &Vec2, radius: f64) -> Option<(usize, usize, usize, usize)> {
        let h = self.grid_h;
        let c0 = ((center.x - radius) / h - 0.5).floor();
        let c1 = ((center.x + radius) / h - 0.5).ceil();
        let r0 = ((center.y - radius) / h - 0.5).floor();
        let r1 = ((center.y + radius) / h - 0.5).ceil();
        if c1 < 0.0 || r1 < 0.0 || c0 > (self.ncols - 1) as f64 || r0 > (self.nrows - 1) as f64 {
            return None;
        }
        Some((
            r0.max(0.0) as usize,
            (r1 as usize).min(self.nrows - 1),
            c0.max(0.0) as usize,
            (c1 as usize).min(self.ncols - 1),
        ))
    }

    pub fn full_region(&self) -> RegionMask {
        RegionMask { cells: (0..self.num_cells()).collect() }
    }

    pub fn free_region(&self) -> RegionMask {
        RegionMask { cells: self.free_cells.clone() }
    }
}

/// Set of raster cells, kept sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegionMask {
    cells: Vec<usize>,
}

impl RegionMask {
    pub fn new(mut cells: Vec<usize>, w: &Workspace) -> Result<Self> {
        cells.sort_unstable();
        if cells.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Validation("region lists a cell twice".into()));
        }
        if let Some(&last) = cells.last() {
            if last >= w.num_cells() {
                return Err(Error::Validation(format!("region cell {last} outside the raster")));
            }
        }
        Ok(Self { cells })
    }

    /// Builds from indices already known to be sorted, unique and in range.
    pub(crate) fn from_sorted(cells: Vec<usize>) -> Self {
        debug_assert!(cells.windows(2).all(|p| p[0] < p[1]));
        Self { cells }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    /// True if the raster cell holding `p` belongs to the region.
    pub fn contains_point(&self, p: &Vec2, w: &Workspace) -> bool {
        w.cell_at(p).is_some_and(|c| self.contains(c))
    }

    /// Run-length encoding as `(first cell, run length)` pairs.
    pub fn to_runs(&self) -> Vec<(usize, usize)> {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for &c in &self.cells {
            match runs.last_mut() {
                Some((start, len)) if *start + *len == c => *len += 1,
                _ => runs.push((c, 1)),
            }
        }
        runs
    }

    pub fn from_runs(runs: &[(usize, usize)], w: &Workspace) -> Result<Self> {
        let cells = runs.iter().flat_map(|&(s, l)| s..s + l).collect();
        Self::new(cells, w)
    }

    /// Area-weighted centroid of the cell centers.
    pub fn centroid(&self, w: &Workspace) -> Option<Vec2> {
        if self.cells.is_empty() {
            return None;
        }
        let sum = self.cells.iter().fold(Vec2::zeros(), |acc, &c| acc + w.cell_center(c));
        Some(sum / self.cells.len() as f64)
    }
}

/// Distribution avoidance penalty: probability mass of `g` on obstacle cells.
pub fn p_obstacle(g: &Gaussian2, w: &Workspace) -> f64 {
    if w.obstacle_cells.is_empty() {
        return 0.0;
    }
    let Some((r0, r1, c0, c1)) = w.window(&g.mean(), QUADRATURE_RADIUS_SIGMAS * g.max_sigma())
    else {
        return 0.0;
    };
    let mut sum = 0.0;
    for r in r0..=r1 {
        for &(a, b) in &w.obstacle_runs[r] {
            for c in a.max(c0)..=b.min(c1) {
                sum += g.pdf(&w.cell_center(r * w.ncols + c));
            }
        }
    }
    (sum * w.cell_area()).min(1.0)
}

/// Weighted sum of the component penalties of a mixture.
pub fn p_obstacle_gmm(p: &Gmm, w: &Workspace) -> f64 {
    p.iter().map(|(g, wt)| wt * p_obstacle(g, w)).sum()
}

/// Mass of `g` over the cells of `region`.
pub fn mass_in_region(g: &Gaussian2, region: &RegionMask, w: &Workspace) -> f64 {
    let sum: f64 = region.cells.iter().map(|&k| g.pdf(&w.cell_center(k))).sum();
    (sum * w.cell_area()).min(1.0)
}

/// Largest density of `g` over the cell centers of `region`.
pub fn max_density_in_region(g: &Gaussian2, region: &RegionMask, w: &Workspace) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::Argument("maximum density over an empty region".into()));
    }
    Ok(region.cells.iter().map(|&k| g.pdf(&w.cell_center(k))).fold(0.0, f64::max))
}

/// `∫_region (x − μ)(x − μ)ᵀ dx` by the midpoint rule.
pub fn second_moment(region: &RegionMask, mu: &Vec2, w: &Workspace) -> Result<Mat2> {
    if region.is_empty() {
        return Err(Error::Argument("second moment of an empty region".into()));
    }
    let mut m = Mat2::zeros();
    for &k in &region.cells {
        let d = w.cell_center(k) - mu;
        m += d * d.transpose();
    }
    m *= w.cell_area();
    let tr = m.trace();
    if !(tr > 0.0) || m.determinant() <= 1e-12 * tr * tr {
        return Err(Error::Domain(format!(
            "second moment of a {}-cell region is degenerate (collinear cells)",
            region.len()
        )));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn open(w: f64, h: f64, grid: f64) -> Workspace {
        rasterize(w, h, vec![], grid).unwrap()
    }

    #[test]
    fn empty_workspace_is_all_free() {
        let ws = open(20.0, 16.0, 0.5);
        assert_eq!(ws.free_cells().len(), 40 * 32);
        assert!(ws.obstacle_cells().is_empty());
        let g = Gaussian2::isotropic(10.0, 8.0, 1.0).unwrap();
        assert_eq!(p_obstacle(&g, &ws), 0.0);
    }

    #[test]
    fn full_cover_has_no_free_cells() {
        let err = rasterize(20.0, 16.0, vec![Polygon::rect(0.0, 0.0, 20.0, 16.0)], 1.0).unwrap_err();
        assert_eq!(err, Error::Validation("no free cells".into()));
    }

    #[test]
    fn square_obstacle_cell_count() {
        let ws = rasterize(20.0, 16.0, vec![Polygon::rect(5.0, 5.0, 7.0, 7.0)], 0.1).unwrap();
        // 2 km × 2 km over 0.01 km² cells = 400, give or take one boundary ring
        let n = ws.obstacle_cells().len() as i64;
        assert!((n - 400).abs() <= 4 * 21, "{n}");
        assert_eq!(ws.obstacle_cells().len() + ws.free_cells().len(), ws.num_cells());
    }

    #[test]
    fn polygon_validation_names_index() {
        let bow = Polygon::new(vec![[1.0, 1.0], [3.0, 3.0], [3.0, 1.0], [1.0, 3.0]]);
        let err = rasterize(10.0, 10.0, vec![Polygon::rect(1.0, 1.0, 2.0, 2.0), bow], 0.5)
            .unwrap_err();
        assert!(err.to_string().contains("obstacle 1"), "{err}");
        let outside = Polygon::rect(8.0, 8.0, 11.0, 9.0);
        let err = rasterize(10.0, 10.0, vec![outside], 0.5).unwrap_err();
        assert!(err.to_string().contains("obstacle 0"), "{err}");
        assert!(rasterize(10.0, 10.0, vec![], 2.0).is_err());
    }

    #[test]
    fn half_plane_through_mean_takes_half() {
        let h = 0.05;
        let ws = rasterize(20.0, 16.0, vec![Polygon::rect(10.0, 0.0, 20.0, 16.0)], h).unwrap();
        let g = Gaussian2::isotropic(10.0, 8.0, 1.0).unwrap();
        let p = p_obstacle(&g, &ws);
        let peak = g.peak_density();
        assert!((p - 0.5).abs() <= 2.0 * h * peak * 16.0, "{p}");
        // boundary cells count as obstacle, so the penalty is not below one half
        assert!(p >= 0.5 - 1e-9);
    }

    #[test]
    fn distant_obstacle_is_negligible() {
        let h = 0.1;
        let obstacle = Polygon::rect(16.0, 0.0, 20.0, 16.0);
        let ws = rasterize(20.0, 16.0, vec![obstacle.clone()], h).unwrap();
        let g = Gaussian2::isotropic(8.0, 8.0, 1.0).unwrap();
        // fine-grid quadrature of the same obstacle at h/4
        let fine = h / 4.0;
        let mut oracle = 0.0;
        let n = (20.0 / fine) as usize;
        for i in 0..n {
            for j in 0..(16.0 / fine) as usize {
                let p = [(i as f64 + 0.5) * fine, (j as f64 + 0.5) * fine];
                if obstacle.contains(p) {
                    oracle += g.pdf(&Vec2::new(p[0], p[1])) * fine * fine;
                }
            }
        }
        assert!(oracle < 1e-6);
        assert!(p_obstacle(&g, &ws) < 1e-6);
    }

    #[test]
    fn mass_in_regions() {
        let ws = open(20.0, 20.0, 0.05);
        let g = Gaussian2::isotropic(10.0, 10.0, 1.0).unwrap();
        assert_relative_eq!(mass_in_region(&g, &ws.full_region(), &ws), 1.0, epsilon = 1e-4);
        assert_eq!(mass_in_region(&g, &RegionMask::default(), &ws), 0.0);

        let disk: Vec<usize> = (0..ws.num_cells())
            .filter(|&k| (ws.cell_center(k) - g.mean()).norm() <= 2.0)
            .collect();
        let disk = RegionMask::new(disk, &ws).unwrap();
        let m = mass_in_region(&g, &disk, &ws);
        assert!((m - (1.0 - (-2.0f64).exp())).abs() < 5e-3, "{m}");
    }

    #[test]
    fn max_density_cases() {
        let ws = open(20.0, 20.0, 0.1);
        let g = Gaussian2::isotropic(10.05, 10.05, 1.0).unwrap();
        let all = ws.full_region();
        assert_relative_eq!(max_density_in_region(&g, &all, &ws).unwrap(), 1.0 / (2.0 * PI), max_relative = 1e-12);

        let far = RegionMask::new(vec![0, 1, 2], &ws).unwrap();
        assert!(max_density_in_region(&g, &far, &ws).unwrap() < g.peak_density());
        assert!(max_density_in_region(&g, &RegionMask::default(), &ws).is_err());

        let e = Gaussian2::from_parts([10.05, 10.05], [4.0, 0.0, 1.0]).unwrap();
        let v = max_density_in_region(&e, &all, &ws).unwrap();
        assert_relative_eq!(v, 1.0 / (2.0 * PI * 2.0), max_relative = 1e-12);
    }

    #[test]
    fn second_moment_of_square() {
        let ws = open(10.0, 10.0, 0.05);
        // unit square [4.5, 5.5]²
        let cells: Vec<usize> = (0..ws.num_cells())
            .filter(|&k| {
                let c = ws.cell_center(k);
                (4.5..5.5).contains(&c.x) && (4.5..5.5).contains(&c.y)
            })
            .collect();
        assert_eq!(cells.len(), 400);
        let region = RegionMask::new(cells, &ws).unwrap();
        let mu = Vec2::new(5.0, 5.0);
        let m = second_moment(&region, &mu, &ws).unwrap();
        // midpoint rule loses h²/12 of the exact 1/12
        assert!((m[(0, 0)] - 1.0 / 12.0).abs() < 0.05 * 0.05 / 12.0 + 1e-12);
        assert!((m[(1, 1)] - 1.0 / 12.0).abs() < 0.05 * 0.05 / 12.0 + 1e-12);
        assert!(m[(0, 1)].abs() < 1e-6);

        // parallel-axis theorem for a far-away reference point
        let off = Vec2::new(3.0, -4.0);
        let far = second_moment(&region, &(mu + off), &ws).unwrap();
        let expected = m + off * off.transpose() * 1.0;
        assert!((far - expected).norm() < 1e-9);

        let line = RegionMask::new(vec![0, 1, 2, 3], &ws).unwrap();
        assert!(second_moment(&line, &Vec2::new(0.1, 0.025), &ws).is_err());
    }

    #[test]
    fn runs_round_trip() {
        let ws = open(10.0, 10.0, 0.5);
        let r = RegionMask::new(vec![3, 4, 5, 9, 11, 12], &ws).unwrap();
        assert_eq!(r.to_runs(), vec![(3, 3), (9, 1), (11, 2)]);
        assert_eq!(RegionMask::from_runs(&r.to_runs(), &ws).unwrap(), r);
        assert!(RegionMask::new(vec![1, 1], &ws).is_err());
        assert!(RegionMask::new(vec![400], &ws).is_err());
    }
}

//! Robot-level simulation along a planned mixture sequence.
//!
//! Robots are sampled from the start mixture, given a goal component from the
//! row-conditional of the trajectory weights, and moved each step by the
//! optimal affine map between consecutive components of their trajectory.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_ot::transport::Coupling;
use crate::gaussian_ot::{transport_map, wg_distance, Gaussian2, Gmm};
use crate::linalg::{spd_sqrt, Mat2, Vec2};
use crate::planner::PlanResult;
use crate::workspace::Workspace;

/// Speeds above `(1 + SPEED_FLAG_MARGIN) · ν` are reported.
pub const SPEED_FLAG_MARGIN: f64 = 0.5;
const ASSIGN_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    /// km.
    pub position: Vec2,
    pub source: usize,
    pub target: usize,
    /// km.
    pub path_length: f64,
    /// `Σ ½ v² Δt` in km²/h.
    pub energy: f64,
}

/// Draws `n` points and the index of the component each came from.
pub fn sample_gmm(p: &Gmm, n: usize, seed: u64) -> Result<Vec<(Vec2, usize)>> {
    let roots = p.components().iter().map(|g| spd_sqrt(&g.cov())).collect::<Result<Vec<Mat2>>>()?;
    let pick = WeightedIndex::new(p.weights()).map_err(|e| Error::Argument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let c = pick.sample(&mut rng);
            let z = Vec2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            (p.components()[c].mean() + roots[c] * z, c)
        })
        .collect())
}

/// Gives every sample a goal component drawn from row `source` of `weights`.
pub fn assign_robots(samples: &[(Vec2, usize)], weights: &Coupling, seed: u64) -> Result<Vec<RobotState>> {
    let mut rows: Vec<Option<WeightedIndex<f64>>> = Vec::with_capacity(weights.rows());
    for i in 0..weights.rows() {
        rows.push(WeightedIndex::new(weights.row(i)).ok());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ASSIGN_STREAM);
    samples
        .iter()
        .map(|&(x, source)| {
            let row = rows.get(source).ok_or_else(|| {
                Error::Argument(format!("sample from component {source} but plan has {} rows", weights.rows()))
            })?;
            let row = row.as_ref().ok_or_else(|| {
                Error::Argument(format!("plan row {source} carries no weight but has robots"))
            })?;
            Ok(RobotState { position: x, source, target: row.sample(&mut rng), path_length: 0.0, energy: 0.0 })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// km/h.
    pub max_speed: f64,
    /// Robots faster than the flag threshold in this step.
    pub flagged: usize,
}

/// Advances every robot from step `k` to `k + 1` of its trajectory.
pub fn step_robots(robots: &mut [RobotState], plan: &PlanResult, k: usize, dt: f64, nu: f64) -> Result<StepReport> {
    let speeds = robots
        .par_iter_mut()
        .map(|r| {
            let traj = plan.trajectory(r.source, r.target).ok_or_else(|| {
                Error::Planning(format!("robot assigned to unreachable pair ({}, {})", r.source, r.target))
            })?;
            let (a, b) = (traj.at(k), traj.at(k + 1));
            if a == b {
                return Ok(0.0);
            }
            let next = transport_map(a, b, &r.position);
            let step = (next - r.position).norm();
            r.position = next;
            r.path_length += step;
            r.energy += 0.5 * (step / dt).powi(2) * dt;
            Ok(step / dt)
        })
        .collect::<Result<Vec<f64>>>()?;
    let limit = (1.0 + SPEED_FLAG_MARGIN) * nu;
    Ok(StepReport {
        max_speed: speeds.iter().copied().fold(0.0, f64::max),
        flagged: speeds.iter().filter(|&&s| s > limit).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub robot: usize,
    pub k: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub robots: Vec<RobotState>,
    pub traces: Vec<TracePoint>,
    pub max_speed: f64,
    /// Robot-steps faster than the flag threshold.
    pub speed_flags: usize,
    /// Robot positions (all steps) inside obstacles or outside the ROI.
    pub blocked_positions: usize,
}

/// Samples `n` robots from `p0`, assigns goals and runs the whole horizon.
pub fn simulate(
    plan: &PlanResult,
    p0: &Gmm,
    w: &Workspace,
    n: usize,
    seed: u64,
    dt: f64,
    nu: f64,
) -> Result<SimOutcome> {
    if n == 0 {
        return Err(Error::Argument("simulation needs at least one robot".into()));
    }
    let samples = sample_gmm(p0, n, seed)?;
    let mut robots = assign_robots(&samples, &plan.weights, seed)?;
    let mut traces = Vec::with_capacity(n * (plan.horizon() + 1));
    let mut blocked = 0;
    let mut record = |robots: &[RobotState], k: usize, traces: &mut Vec<TracePoint>| {
        for (id, r) in robots.iter().enumerate() {
            traces.push(TracePoint { robot: id, k, x: r.position.x, y: r.position.y });
            if !w.cell_at(&r.position).is_some_and(|c| w.is_free(c)) {
                blocked += 1;
            }
        }
    };
    record(&robots, 0, &mut traces);
    let mut max_speed = 0.0f64;
    let mut speed_flags = 0;
    for k in 0..plan.horizon() {
        let rep = step_robots(&mut robots, plan, k, dt, nu)?;
        max_speed = max_speed.max(rep.max_speed);
        speed_flags += rep.flagged;
        record(&robots, k + 1, &mut traces);
    }
    Ok(SimOutcome { robots, traces, max_speed, speed_flags, blocked_positions: blocked })
}

/// Sample mean and (biased) covariance of a point cloud.
pub fn cloud_moments(points: &[Vec2]) -> Option<(Vec2, Mat2)> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::zeros(), |a, p| a + p) / n;
    let cov = points.iter().fold(Mat2::zeros(), |a, p| {
        let d = p - mean;
        a + d * d.transpose()
    }) / n;
    Some((mean, cov))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_robots: usize,
    /// Number of time steps `T`.
    pub horizon: usize,
    /// `T · Δt` (h).
    pub traversal_time_h: f64,
    /// Mean robot path length `D` (km).
    pub avg_distance_km: f64,
    /// Mean of `Σ ½ v² Δt` per robot (km²/h).
    pub energy_per_mass: f64,
    /// `Σ_k d(℘̂_k, ℘̂_{k+1})` (km).
    pub wg_path_length_km: f64,
    /// `d(℘̂_T, ℘_f)` (km).
    pub final_wg_error_km: f64,
    /// WG distance from per-goal Gaussian fits of the final robot cloud to `℘_f` (km).
    pub empirical_final_error_km: f64,
    pub max_dap: f64,
    /// `Σ ω̂ · Σ W2²` (km²).
    pub upper_bound_cost: f64,
    /// `Σ_k d²(℘̂_k, ℘̂_{k+1}) + d²(℘̂_T, ℘_f)` (km²).
    pub wg_objective: f64,
    pub max_speed_kmh: f64,
    pub speed_flags: usize,
    /// Fraction of recorded robot positions inside obstacles or outside the ROI.
    pub blocked_fraction: f64,
}

pub fn compute_metrics(out: &SimOutcome, plan: &PlanResult, pf: &Gmm, dt: f64) -> Result<RunMetrics> {
    let n = out.robots.len();
    let nf = n as f64;
    let avg_distance_km = out.robots.iter().map(|r| r.path_length).sum::<f64>() / nf;
    let energy_per_mass = out.robots.iter().map(|r| r.energy).sum::<f64>() / nf;
    let (final_wg_error_km, _) = wg_distance(plan.gmm_sequence.last().unwrap(), pf)?;
    Ok(RunMetrics {
        n_robots: n,
        horizon: plan.horizon(),
        traversal_time_h: plan.horizon() as f64 * dt,
        avg_distance_km,
        energy_per_mass,
        wg_path_length_km: plan.wg_path_length()?,
        final_wg_error_km,
        empirical_final_error_km: empirical_error(&out.robots, pf)?,
        max_dap: plan.max_dap,
        upper_bound_cost: plan.upper_bound_cost,
        wg_objective: plan.wg_objective(pf)?,
        max_speed_kmh: out.max_speed,
        speed_flags: out.speed_flags,
        blocked_fraction: out.blocked_positions as f64 / out.traces.len().max(1) as f64,
    })
}

/// Fits a Gaussian to the robots of every goal component (three or more
/// robots needed) and measures the fitted mixture against `pf`.
fn empirical_error(robots: &[RobotState], pf: &Gmm) -> Result<f64> {
    let mut comps = Vec::new();
    let mut weights = Vec::new();
    for j in 0..pf.len() {
        let pts: Vec<Vec2> = robots.iter().filter(|r| r.target == j).map(|r| r.position).collect();
        if pts.len() < 3 {
            continue;
        }
        let (m, c) = cloud_moments(&pts).expect("nonempty");
        if let Ok(g) = Gaussian2::new(m, c) {
            comps.push(g);
            weights.push(pts.len() as f64);
        }
    }
    if comps.is_empty() {
        return Ok(f64::NAN);
    }
    let fit = Gmm::normalized(comps, weights)?;
    Ok(wg_distance(&fit, pf)?.0)
}

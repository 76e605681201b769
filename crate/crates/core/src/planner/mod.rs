//! Macroscopic planning: component graph, shortest component trajectories,
//! trajectory weights and the assembled mixture sequence.

mod baseline;
mod graph;

use std::fmt;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baseline::{grid_collocation, random_sites};
pub use graph::{
    build_graph, densify_path, shortest_gc_path, shortest_tree, Edge, EdgeRule, GcGraph, GcTrajectory,
    ShortestTree, EDGE_PROBES,
};

use crate::error::{Error, Result};
use crate::gaussian_ot::transport::{solve_transport, Coupling};
use crate::gaussian_ot::{wg_distance, Gaussian2, Gmm, GEODESIC_DROP};
use crate::gcvt::{build_gcvt, tessellate_sites, GcvtParams, GcvtVariant, Tessellation};
use crate::workspace::{p_obstacle_gmm, Workspace};

/// Mass on unreachable start/goal pairs above which planning fails.
pub const UNREACHABLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanParams {
    pub gcvt: GcvtParams,
    /// Edge threshold on W2 (km).
    pub d_th: f64,
    /// Component speed (km/h).
    pub nu: f64,
    /// Time step (h).
    pub dt: f64,
    /// Obstacle penalty weight of the grid baseline (km²).
    pub lambda_p: f64,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self { gcvt: GcvtParams::default(), d_th: 3.0, nu: 5.0, dt: 0.1, lambda_p: 1e3 }
    }
}

impl PlanParams {
    pub fn validate(&self) -> Result<()> {
        self.gcvt.validate()?;
        for (name, v) in [("d_th", self.d_th), ("nu", self.nu), ("dt", self.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.lambda_p >= 0.0 && self.lambda_p.is_finite()) {
            return Err(Error::Validation(format!("lambda_p = {} must be nonnegative", self.lambda_p)));
        }
        Ok(())
    }

    /// Largest W2 distance covered in one time step (km).
    pub fn max_step(&self) -> f64 {
        self.nu * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMethod {
    Cvt1,
    Cvt2,
    Grid,
    Random,
}

impl PlanMethod {
    pub const ALL: [PlanMethod; 4] = [PlanMethod::Cvt1, PlanMethod::Cvt2, PlanMethod::Grid, PlanMethod::Random];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlanMethod::Cvt1 => "cvt1",
            PlanMethod::Cvt2 => "cvt2",
            PlanMethod::Grid => "grid",
            PlanMethod::Random => "random",
        }
    }

    /// Whether every planned component is held below the obstacle threshold.
    pub fn enforces_obstacle_bound(&self) -> bool {
        !matches!(self, PlanMethod::Grid)
    }
}

impl fmt::Display for PlanMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlanMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlanMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown method '{s}' (cvt1, cvt2, grid, random)")))
    }
}

/// Which baseline [`plan_baseline`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Grid,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub method: PlanMethod,
    pub graph: GcGraph,
    /// Absent for the grid baseline.
    pub tessellation: Option<Tessellation>,
    pub n0: usize,
    pub nf: usize,
    /// Row-major `n0 × nf`; `None` for unreachable pairs.
    pub trajectories: Vec<Option<GcTrajectory>>,
    pub weights: Coupling,
    /// Mixtures at steps `0..=T`.
    pub gmm_sequence: Vec<Gmm>,
    /// `Σ ω̂ · Σ_k W2²(g_k, g_{k+1})` over the padded trajectories.
    pub upper_bound_cost: f64,
    /// `Σ ω̂ · L̂` with `L̂` the trajectory length, the weight LP objective.
    pub lp_objective: f64,
    pub max_dap: f64,
}

impl PlanResult {
    pub fn horizon(&self) -> usize {
        self.gmm_sequence.len() - 1
    }

    pub fn trajectory(&self, i: usize, j: usize) -> Option<&GcTrajectory> {
        self.trajectories[i * self.nf + j].as_ref()
    }

    /// `(i, j, weight, trajectory)` for every pair carrying weight.
    pub fn weighted_pairs(&self) -> impl Iterator<Item = (usize, usize, f64, &GcTrajectory)> + '_ {
        (0..self.n0).flat_map(move |i| {
            (0..self.nf).filter_map(move |j| {
                let wt = self.weights.get(i, j);
                (wt > GEODESIC_DROP).then(|| (i, j, wt, self.trajectory(i, j).expect("weighted pair is reachable")))
            })
        })
    }

    /// `Σ_k d²(℘̂_k, ℘̂_{k+1}) + d²(℘̂_T, ℘_f)` with optimal couplings.
    pub fn wg_objective(&self, pf: &Gmm) -> Result<f64> {
        let steps = self
            .gmm_sequence
            .par_windows(2)
            .map(|p| wg_distance(&p[0], &p[1]).map(|(d, _)| d * d))
            .collect::<Result<Vec<f64>>>()?;
        let (tail, _) = wg_distance(self.gmm_sequence.last().unwrap(), pf)?;
        Ok(steps.iter().sum::<f64>() + tail * tail)
    }

    /// `Σ_k d(℘̂_k, ℘̂_{k+1})`.
    pub fn wg_path_length(&self) -> Result<f64> {
        let steps = self
            .gmm_sequence
            .par_windows(2)
            .map(|p| wg_distance(&p[0], &p[1]).map(|(d, _)| d))
            .collect::<Result<Vec<f64>>>()?;
        Ok(steps.iter().sum())
    }
}

/// Transportation LP over trajectory costs; infinite costs mark unreachable pairs.
pub fn optimize_weights(costs: &[f64], w0: &[f64], wf: &[f64]) -> Result<Coupling> {
    let sol = solve_transport(costs, w0, wf)?;
    if sol.forbidden_mass > UNREACHABLE_TOL {
        let unreachable: Vec<String> = (0..w0.len())
            .flat_map(|i| (0..wf.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| costs[i * wf.len() + j].is_infinite())
            .map(|(i, j)| format!("({i},{j})"))
            .collect();
        return Err(Error::Planning(format!(
            "marginals need {:.3e} mass on unreachable start/goal pairs {}",
            sol.forbidden_mass,
            unreachable.join(" ")
        )));
    }
    Ok(sol.coupling)
}

/// SwarmCVT: GCVT collocation, safe graph, shortest trajectories, weights.
pub fn plan_swarmcvt(
    p0: &Gmm,
    pf: &Gmm,
    w: &Workspace,
    params: &PlanParams,
    variant: GcvtVariant,
) -> Result<PlanResult> {
    params.validate()?;
    let tess = build_gcvt(w, &params.gcvt, variant)?;
    let method = match variant {
        GcvtVariant::I => PlanMethod::Cvt1,
        GcvtVariant::II => PlanMethod::Cvt2,
    };
    plan_on(p0, pf, w, params, method, tess.components(), Some(tess))
}

/// The grid-collocation and random-collocation baselines.
pub fn plan_baseline(p0: &Gmm, pf: &Gmm, w: &Workspace, params: &PlanParams, kind: BaselineKind) -> Result<PlanResult> {
    params.validate()?;
    match kind {
        BaselineKind::Grid => {
            let nodes = grid_collocation(w, params.gcvt.k, params.gcvt.rho_max)?;
            plan_on(p0, pf, w, params, PlanMethod::Grid, nodes, None)
        }
        BaselineKind::Random => {
            let sites = random_sites(w, params.gcvt.k, params.gcvt.seed)?;
            let tess = tessellate_sites(w, sites, Vec::new(), &params.gcvt, GcvtVariant::II)?;
            plan_on(p0, pf, w, params, PlanMethod::Random, tess.components(), Some(tess))
        }
    }
}

pub fn plan(p0: &Gmm, pf: &Gmm, w: &Workspace, params: &PlanParams, method: PlanMethod) -> Result<PlanResult> {
    match method {
        PlanMethod::Cvt1 => plan_swarmcvt(p0, pf, w, params, GcvtVariant::I),
        PlanMethod::Cvt2 => plan_swarmcvt(p0, pf, w, params, GcvtVariant::II),
        PlanMethod::Grid => plan_baseline(p0, pf, w, params, BaselineKind::Grid),
        PlanMethod::Random => plan_baseline(p0, pf, w, params, BaselineKind::Random),
    }
}

fn plan_on(
    p0: &Gmm,
    pf: &Gmm,
    w: &Workspace,
    params: &PlanParams,
    method: PlanMethod,
    collocation: Vec<Gaussian2>,
    tessellation: Option<Tessellation>,
) -> Result<PlanResult> {
    let eta_b = params.gcvt.eta_b;
    let max_step = params.max_step();
    let rule = if method.enforces_obstacle_bound() {
        EdgeRule::Safe { eta_b, max_step }
    } else {
        EdgeRule::Penalized { lambda_p: params.lambda_p }
    };
    let graph = build_graph(&collocation, p0, pf, params.d_th, w, rule)?;
    info!(
        "{method}: graph with {} nodes and {} edges",
        graph.len(),
        graph.edges().len()
    );
    let (n0, nf) = (p0.len(), pf.len());

    let trees = (0..n0)
        .into_par_iter()
        .map(|i| shortest_tree(&graph, graph.start_node(i)))
        .collect::<Result<Vec<_>>>()?;
    let trajectories = (0..n0 * nf)
        .into_par_iter()
        .map(|p| {
            let (i, j) = (p / nf, p % nf);
            match trees[i].path(graph.goal_node(j)) {
                Ok(path) => densify_path(&graph, &path, max_step).map(Some),
                Err(Error::NoPath { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<Option<GcTrajectory>>>>()?;
    let costs: Vec<f64> = trajectories
        .iter()
        .map(|t| t.as_ref().map_or(f64::INFINITY, |t| t.cost))
        .collect();
    let weights = optimize_weights(&costs, p0.weights(), pf.weights())?;

    let weighted: Vec<(f64, &GcTrajectory)> = (0..n0 * nf)
        .filter(|&p| weights.as_slice()[p] > GEODESIC_DROP)
        .map(|p| (weights.as_slice()[p], trajectories[p].as_ref().expect("weighted pair is reachable")))
        .collect();
    let horizon = weighted.iter().map(|(_, t)| t.steps()).max().unwrap_or(0);
    let gmm_sequence = (0..=horizon)
        .into_par_iter()
        .map(|k| {
            Gmm::normalized(
                weighted.iter().map(|(_, t)| *t.at(k)).collect(),
                weighted.iter().map(|(wt, _)| *wt).collect(),
            )
        })
        .collect::<Result<Vec<Gmm>>>()?;
    let upper_bound_cost = weighted.iter().map(|(wt, t)| wt * t.energy).sum();
    let lp_objective = weighted.iter().map(|(wt, t)| wt * t.cost).sum();
    let max_dap = gmm_sequence
        .par_iter()
        .map(|p| p_obstacle_gmm(p, w))
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);
    if method.enforces_obstacle_bound() && max_dap >= eta_b {
        return Err(Error::Planning(format!("planned mixture has obstacle penalty {max_dap:.4} ≥ {eta_b}")));
    }
    Ok(PlanResult {
        method,
        graph,
        tessellation,
        n0,
        nf,
        trajectories,
        weights,
        gmm_sequence,
        upper_bound_cost,
        lp_objective,
        max_dap,
    })
}

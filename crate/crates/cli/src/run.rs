use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use swarmcvt::gaussian_ot::GaussianRecord;
use swarmcvt::gcvt::TessellationFile;
use swarmcvt::planner::Edge;
use swarmcvt::sim::TracePoint;
use swarmcvt::{
    build_gcvt, compute_metrics, plan, simulate, GcvtVariant, PlanMethod, PlanParams, PlanResult, RunMetrics,
    Tessellation, Workspace,
};

use crate::error::{CliError, CliResult};
use crate::scenario::Scenario;

pub const RUN_SCHEMA: &str = "swarmcvt.run/1";
pub const GRAPH_SCHEMA: &str = "swarmcvt.graph/1";

pub const SCENARIO_FILE: &str = "scenario.toml";
pub const META_FILE: &str = "run_meta.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const TIMING_FILE: &str = "timing.json";
pub const TESSELLATION_FILE: &str = "tessellation.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const SEQUENCE_FILE: &str = "gmm_sequence.csv";
pub const TRACES_FILE: &str = "robot_traces.csv";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub swarmcvt: String,
    pub cli: String,
}

impl Versions {
    pub fn current() -> Self {
        Self { swarmcvt: swarmcvt::VERSION.into(), cli: env!("CARGO_PKG_VERSION").into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema: String,
    pub scenario: Option<String>,
    /// `cvt1`, `cvt2`, `grid`, `random`, or `gcvt-I` / `gcvt-II` for tessellation-only runs.
    pub method: String,
    pub seed: u64,
    pub components: usize,
    pub robots: usize,
    pub params: PlanParams,
    pub defaults_applied: Vec<String>,
    pub versions: Versions,
    pub retained_components: Option<usize>,
    pub dropped_cells: Vec<usize>,
    pub definitions: Vec<String>,
}

/// Metric and baseline conventions recorded with every run.
pub const DEFINITIONS: [&str; 5] = [
    "energy_per_mass: mean over robots of sum_k 0.5 * (step_k / dt)^2 * dt (km^2/h)",
    "avg_distance_km: mean robot path length; wg_path_length_km: sum_k WG(p_k, p_k+1)",
    "final_wg_error_km: WG(p_T, target); empirical_final_error_km: WG of per-goal Gaussian fits of the final robots to the target",
    "grid baseline edge cost: W2^2 + lambda_p * p_obstacle(midpoint); lambda_p is not taken from any reference value",
    "trajectory steps: each edge of W2 length d is split into ceil(d / (nu * dt)) equal geodesic steps",
];

fn definitions() -> Vec<String> {
    DEFINITIONS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_s: f64,
    pub plan_s: f64,
    pub simulate_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub schema: String,
    pub n_collocation: usize,
    pub n_start: usize,
    pub n_goal: usize,
    /// Collocation nodes first, then start and goal components.
    pub nodes: Vec<GaussianRecord>,
    pub edges: Vec<Edge>,
}

impl GraphFile {
    pub fn new(p: &PlanResult) -> Self {
        let g = &p.graph;
        Self {
            schema: GRAPH_SCHEMA.into(),
            n_collocation: g.n_collocation(),
            n_start: g.n_start(),
            n_goal: g.n_goal(),
            nodes: g.nodes().iter().map(GaussianRecord::from).collect(),
            edges: g.edges().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    /// km; infinite for unreachable pairs.
    pub length: f64,
    /// km².
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub k: usize,
    pub component: usize,
    pub weight: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub cov_xx: f64,
    pub cov_xy: f64,
    pub cov_yy: f64,
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub method: PlanMethod,
    pub components: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub plan: PlanResult,
}

/// Plans, simulates and writes a results directory at `out`.
///
/// `components` overrides the scenario's `K`. On failure an `error.json`
/// report is left in `out`.
pub fn run(
    scenario: &Scenario,
    method: PlanMethod,
    components: Option<usize>,
    seed: u64,
    out: &Path,
) -> CliResult<RunRecord> {
    create_dir(out)?;
    let result = run_inner(scenario, method, components, seed, out);
    if let Err(e) = &result {
        write_error(out, e);
    }
    result
}

fn run_inner(
    scenario: &Scenario,
    method: PlanMethod,
    components: Option<usize>,
    seed: u64,
    out: &Path,
) -> CliResult<RunRecord> {
    let start = Instant::now();
    let resolved = scenario.resolve(components, seed);
    let k = resolved.plan.gcvt.k;
    resolved.plan.validate()?;
    let w = scenario.workspace()?;
    let p0 = scenario.initial_gmm()?;
    let pf = scenario.target_gmm()?;
    scenario.pinned(k, seed).save(&out.join(SCENARIO_FILE))?;

    info!("{method} K={k} seed={seed}: planning");
    let plan_result = plan(&p0, &pf, &w, &resolved.plan, method)?;
    let plan_s = start.elapsed().as_secs_f64();
    info!("{method} K={k} seed={seed}: simulating {} robots over {} steps", resolved.robots, plan_result.horizon());
    let sim_start = Instant::now();
    let outcome =
        simulate(&plan_result, &p0, &w, resolved.robots, seed, resolved.plan.dt, resolved.plan.nu)?;
    let metrics = compute_metrics(&outcome, &plan_result, &pf, resolved.plan.dt)?;
    let simulate_s = sim_start.elapsed().as_secs_f64();

    let meta = RunMeta {
        schema: RUN_SCHEMA.into(),
        scenario: scenario.name.clone(),
        method: method.to_string(),
        seed,
        components: k,
        robots: resolved.robots,
        params: resolved.plan.clone(),
        defaults_applied: resolved.defaults_applied.clone(),
        versions: Versions::current(),
        retained_components: plan_result.tessellation.as_ref().map(Tessellation::len),
        dropped_cells: plan_result.tessellation.as_ref().map(|t| t.dropped().to_vec()).unwrap_or_default(),
        definitions: definitions(),
    };
    write_json(&out.join(META_FILE), &meta)?;
    write_json(&out.join(METRICS_FILE), &metrics)?;
    if let Some(t) = &plan_result.tessellation {
        let variant = match method {
            PlanMethod::Cvt1 => GcvtVariant::I,
            _ => GcvtVariant::II,
        };
        write_tessellation(out, t, &w, &resolved.plan, variant)?;
    }
    write_json(&out.join(GRAPH_FILE), &GraphFile::new(&plan_result))?;
    write_csv(&out.join(WEIGHTS_FILE), weight_rows(&plan_result))?;
    write_csv(&out.join(SEQUENCE_FILE), sequence_rows(&plan_result))?;
    write_csv(&out.join(TRACES_FILE), outcome.traces.iter())?;
    let timing = Timing { wall_time_s: start.elapsed().as_secs_f64(), plan_s, simulate_s };
    write_json(&out.join(TIMING_FILE), &timing)?;
    Ok(RunRecord { dir: out.to_path_buf(), method, components: k, seed, metrics, plan: plan_result })
}

/// Builds a tessellation only and writes it with its metadata.
pub fn run_gcvt(
    scenario: &Scenario,
    variant: GcvtVariant,
    components: Option<usize>,
    seed: u64,
    out: &Path,
) -> CliResult<Tessellation> {
    create_dir(out)?;
    let result = (|| {
        let start = Instant::now();
        let resolved = scenario.resolve(components, seed);
        let k = resolved.plan.gcvt.k;
        resolved.plan.validate()?;
        let w = scenario.workspace()?;
        scenario.pinned(k, seed).save(&out.join(SCENARIO_FILE))?;
        let t = build_gcvt(&w, &resolved.plan.gcvt, variant)?;
        let plan_s = start.elapsed().as_secs_f64();
        let meta = RunMeta {
            schema: RUN_SCHEMA.into(),
            scenario: scenario.name.clone(),
            method: format!("gcvt-{variant}"),
            seed,
            components: k,
            robots: resolved.robots,
            params: resolved.plan.clone(),
            defaults_applied: resolved.defaults_applied,
            versions: Versions::current(),
            retained_components: Some(t.len()),
            dropped_cells: t.dropped().to_vec(),
            definitions: definitions(),
        };
        write_json(&out.join(META_FILE), &meta)?;
        write_tessellation(out, &t, &w, &resolved.plan, variant)?;
        let timing = Timing { wall_time_s: start.elapsed().as_secs_f64(), plan_s, simulate_s: 0.0 };
        write_json(&out.join(TIMING_FILE), &timing)?;
        Ok(t)
    })();
    if let Err(e) = &result {
        write_error(out, e);
    }
    result
}

fn write_tessellation(
    out: &Path,
    t: &Tessellation,
    w: &Workspace,
    params: &PlanParams,
    variant: GcvtVariant,
) -> CliResult<()> {
    let file = TessellationFile::new(t, w, &params.gcvt, variant);
    write_text(&out.join(TESSELLATION_FILE), &(file.to_json()? + "\n"))
}

pub fn weight_rows(p: &PlanResult) -> Vec<WeightRow> {
    (0..p.n0)
        .flat_map(|i| (0..p.nf).map(move |j| (i, j)))
        .map(|(i, j)| {
            let (length, energy) = p.trajectory(i, j).map_or((f64::INFINITY, f64::INFINITY), |t| (t.cost, t.energy));
            WeightRow { i, j, weight: p.weights.get(i, j), length, energy }
        })
        .collect()
}

pub fn sequence_rows(p: &PlanResult) -> Vec<SequenceRow> {
    p.gmm_sequence
        .iter()
        .enumerate()
        .flat_map(|(k, gmm)| {
            gmm.iter().enumerate().map(move |(c, (g, wt))| {
                let [cov_xx, cov_xy, cov_yy] = g.cov_entries();
                SequenceRow {
                    k,
                    component: c,
                    weight: wt,
                    mean_x: g.mean().x,
                    mean_y: g.mean().y,
                    cov_xx,
                    cov_xy,
                    cov_yy,
                }
            })
        })
        .collect()
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::encode(&path.display().to_string(), e))?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        wtr.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    rdr.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Parse(format!("{}: {other:?}", path.display())),
    }
}

fn write_error(out: &Path, e: &CliError) {
    if let Err(w) = write_json(&out.join(ERROR_FILE), &e.report()) {
        log::warn!("could not write error report: {w}");
    }
}

pub fn read_traces(path: &Path) -> CliResult<Vec<TracePoint>> {
    read_csv(path)
}

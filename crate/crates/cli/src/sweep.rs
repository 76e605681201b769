use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use swarmcvt::{PlanMethod, RunMetrics};

use crate::error::{CliError, CliResult};
use crate::run::{create_dir, run, write_csv};
use crate::scenario::Scenario;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const FAILURES_FILE: &str = "failures.csv";

/// Environment variable capping the number of worker threads.
pub const JOBS_ENV: &str = "SWARMCVT_JOBS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub method: PlanMethod,
    pub components: usize,
    pub seed: u64,
}

impl Job {
    pub fn dir_name(&self) -> String {
        format!("{}_k{}_s{}", self.method, self.components, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: PlanMethod,
    pub components: usize,
    pub metric: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRow {
    pub method: PlanMethod,
    pub components: usize,
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub runs: Vec<(Job, RunMetrics)>,
    pub failures: Vec<FailureRow>,
    pub summary: Vec<SummaryRow>,
}

pub fn jobs(methods: &[PlanMethod], components: &[usize], seeds: &[u64]) -> Vec<Job> {
    let mut out = Vec::with_capacity(methods.len() * components.len() * seeds.len());
    for &method in methods {
        for &k in components {
            for &seed in seeds {
                out.push(Job { method, components: k, seed });
            }
        }
    }
    out
}

/// Runs every job in its own directory under `out` and writes the
/// aggregate tables. Failed runs are reported, not fatal.
pub fn sweep(scenario: &Scenario, jobs: &[Job], out: &Path) -> CliResult<SweepOutcome> {
    if jobs.is_empty() {
        return Err(CliError::Validation("sweep: no runs requested".into()));
    }
    create_dir(out)?;
    info!("sweep of {} runs into {}", jobs.len(), out.display());
    let results: Vec<(Job, CliResult<RunMetrics>)> = jobs
        .par_iter()
        .map(|job| {
            let dir: PathBuf = out.join(job.dir_name());
            let r = run(scenario, job.method, Some(job.components), job.seed, &dir).map(|rec| rec.metrics);
            (*job, r)
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (job, r) in results {
        match r {
            Ok(m) => runs.push((job, m)),
            Err(CliError::Io { path, source }) => return Err(CliError::Io { path, source }),
            Err(e) => {
                warn!("{}: {e}", job.dir_name());
                failures.push(FailureRow {
                    method: job.method,
                    components: job.components,
                    seed: job.seed,
                    kind: e.kind().into(),
                    message: e.to_string(),
                });
            }
        }
    }
    let summary = summarize(&runs)?;
    write_csv(&out.join(SUMMARY_FILE), summary.iter())?;
    write_csv(&out.join(FAILURES_FILE), failures.iter())?;
    Ok(SweepOutcome { runs, failures, summary })
}

/// Mean and sample standard deviation of every numeric metric per
/// `(method, K)`, in job order.
pub fn summarize(runs: &[(Job, RunMetrics)]) -> CliResult<Vec<SummaryRow>> {
    let mut groups: Vec<((PlanMethod, usize), BTreeMap<String, Vec<f64>>)> = Vec::new();
    let mut metric_order: Vec<String> = Vec::new();
    for (job, m) in runs {
        let key = (job.method, job.components);
        let idx = match groups.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, BTreeMap::new()));
                groups.len() - 1
            }
        };
        let value = serde_json::to_value(m).map_err(|e| CliError::encode("metrics", e))?;
        let obj = value.as_object().expect("metrics serialize to an object");
        for (name, v) in obj {
            if let Some(x) = v.as_f64() {
                if !metric_order.contains(name) {
                    metric_order.push(name.clone());
                }
                groups[idx].1.entry(name.clone()).or_default().push(x);
            }
        }
    }
    let mut rows = Vec::new();
    for ((method, components), values) in &groups {
        for name in &metric_order {
            if let Some(xs) = values.get(name) {
                let (mean, std) = mean_std(xs);
                rows.push(SummaryRow {
                    method: *method,
                    components: *components,
                    metric: name.clone(),
                    runs: xs.len(),
                    mean,
                    std,
                });
            }
        }
    }
    Ok(rows)
}

/// Sample standard deviation; zero for a single value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Worker count from [`JOBS_ENV`], if set to a positive integer.
pub fn jobs_from_env() -> CliResult<Option<usize>> {
    match std::env::var(JOBS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Validation(format!("{JOBS_ENV}: '{s}' is not a positive integer"))),
        },
    }
}

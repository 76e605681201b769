use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use swarmcvt::{GcvtVariant, PlanMethod};
use swarmcvt_cli::error::{CliError, CliResult};
use swarmcvt_cli::plot::emit_plots_recursive;
use swarmcvt_cli::run::{run, run_gcvt};
use swarmcvt_cli::scenario::{Scenario, DEFAULT_SCENARIO};
use swarmcvt_cli::sweep::{jobs, jobs_from_env, sweep};

#[derive(Parser)]
#[command(name = "swarmcvt", version, about = "Macroscopic swarm planning in Wasserstein space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan, simulate and archive one run.
    Plan {
        /// Scenario TOML; the bundled default when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_parser = parse_method)]
        method: PlanMethod,
        /// Number of collocation components K.
        #[arg(long)]
        components: Option<usize>,
        /// Seed; the scenario's first seed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs every method × K × seed combination in parallel.
    Sweep {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "cvt1,cvt2,grid,random")]
        methods: Vec<PlanMethod>,
        #[arg(long, value_delimiter = ',')]
        components_list: Vec<usize>,
        /// Seeds; the scenario's seed list when omitted.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes SVG plots for a run directory or a sweep directory.
    Plot {
        #[arg(long)]
        results: PathBuf,
    },
    /// Builds and archives a tessellation only.
    Gcvt {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_parser = parse_variant)]
        variant: GcvtVariant,
        #[arg(long)]
        components: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the bundled default scenario.
    DefaultScenario,
}

fn parse_method(s: &str) -> Result<PlanMethod, String> {
    s.parse().map_err(|e: swarmcvt::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<GcvtVariant, String> {
    s.parse().map_err(|e: swarmcvt::Error| e.to_string())
}

fn load(path: Option<&Path>) -> CliResult<Scenario> {
    match path {
        Some(p) => Scenario::load(p),
        None => {
            info!("using the bundled default scenario");
            Ok(Scenario::bundled())
        }
    }
}

fn first_seed(s: &Scenario, seed: Option<u64>) -> u64 {
    seed.or_else(|| s.seeds.first().copied()).unwrap_or(0)
}

fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = jobs_from_env()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Plan { scenario, method, components, seed, out } => {
            let s = load(scenario.as_deref())?;
            let seed = first_seed(&s, seed);
            let rec = run(&s, method, components, seed, &out)?;
            println!(
                "{} K={} seed={}: energy {:.4} km²/h, distance {:.3} km, final error {:.2e} km -> {}",
                rec.method,
                rec.components,
                rec.seed,
                rec.metrics.energy_per_mass,
                rec.metrics.avg_distance_km,
                rec.metrics.final_wg_error_km,
                rec.dir.display()
            );
        }
        Command::Sweep { scenario, methods, components_list, seeds, out } => {
            let s = load(scenario.as_deref())?;
            let ks = if components_list.is_empty() {
                vec![s.resolve(None, 0).plan.gcvt.k]
            } else {
                components_list
            };
            let seeds = if seeds.is_empty() { s.seeds.clone() } else { seeds };
            let seeds = if seeds.is_empty() { vec![0] } else { seeds };
            let res = sweep(&s, &jobs(&methods, &ks, &seeds), &out)?;
            println!("{} runs succeeded, {} failed -> {}", res.runs.len(), res.failures.len(), out.display());
        }
        Command::Plot { results } => {
            for p in emit_plots_recursive(&results)? {
                println!("{}", p.display());
            }
        }
        Command::Gcvt { scenario, variant, components, seed, out } => {
            let s = load(scenario.as_deref())?;
            let seed = first_seed(&s, seed);
            let t = run_gcvt(&s, variant, components, seed, &out)?;
            println!("GCVT-{variant}: {} generators, {} dropped -> {}", t.len(), t.dropped().len(), out.display());
        }
        Command::DefaultScenario => print!("{DEFAULT_SCENARIO}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::to_string(&e.report()).unwrap_or_else(|_| e.to_string());
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

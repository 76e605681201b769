//! Scenario files, run orchestration, results archives and SVG plots for
//! the `swarmcvt` planner.

pub mod error;
pub mod plot;
pub mod run;
pub mod scenario;
pub mod sweep;

pub use error::{CliError, CliResult, ErrorReport};
pub use scenario::Scenario;

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot encode {what}: {reason}")]
    Encode { what: String, reason: String },
    #[error(transparent)]
    Core(#[from] swarmcvt::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn encode(what: &str, reason: impl ToString) -> Self {
        CliError::Encode { what: what.into(), reason: reason.to_string() }
    }

    /// 2 validation, 3 infeasibility, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Validation(_) => 2,
            CliError::Io { .. } | CliError::Encode { .. } => 4,
            CliError::Core(e) if e.is_infeasibility() => 3,
            CliError::Core(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::Io { .. } => "io",
            CliError::Encode { .. } => "encode",
            CliError::Core(swarmcvt::Error::Infeasible { .. }) => "infeasible",
            CliError::Core(swarmcvt::Error::TooManyInfeasible { .. }) => "too_many_infeasible",
            CliError::Core(swarmcvt::Error::NoPath { .. }) => "no_path",
            CliError::Core(swarmcvt::Error::Planning(_)) => "planning",
            CliError::Core(swarmcvt::Error::Solver { .. }) => "solver",
            CliError::Core(_) => "invalid_input",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport { kind: self.kind(), exit_code: self.exit_code(), message: self.to_string() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

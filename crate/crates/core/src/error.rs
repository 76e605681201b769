use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the planning library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A numeric input left the domain an operation is defined on
    /// (non-SPD matrix, singular covariance, degenerate region).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller supplied an argument outside its documented range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input data failed structural validation (polygons, weights, parameters).
    #[error("validation error: {0}")]
    Validation(String),

    /// The transportation solver did not terminate.
    #[error("transport solver failed after {iterations} pivots: {reason}")]
    Solver { iterations: usize, reason: String },

    /// A covariance optimization found no point satisfying every constraint.
    #[error("{}no feasible covariance ({})", .cell.map(|c| format!("cell {c}: ")).unwrap_or_default(), .binding.join(", "))]
    Infeasible { cell: Option<usize>, binding: Vec<String> },

    /// Too many cells of a tessellation were infeasible to drop them.
    #[error("{} of {total} cells infeasible (limit {limit}): cells {:?}", .cells.len(), .cells)]
    TooManyInfeasible { cells: Vec<usize>, total: usize, limit: usize },

    #[error("no path from node {src} to node {dst}")]
    NoPath { src: usize, dst: usize },

    /// The macroscopic plan could not be completed.
    #[error("planning failed: {0}")]
    Planning(String),
}

impl Error {
    /// True for errors that stem from infeasible inputs rather than malformed ones.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::Infeasible { .. }
                | Error::TooManyInfeasible { .. }
                | Error::NoPath { .. }
                | Error::Planning(_)
                | Error::Solver { .. }
        )
    }
}

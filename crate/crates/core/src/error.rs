use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants are grouped by the stage that produces them so the CLI can map
/// them onto exit codes (validation vs. numerical failure).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("pair (C, A) is unobservable: observability rank {rank} < {n}")]
    Unobservable { rank: usize, n: usize },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("matrix is not a nonsingular M-matrix: {0}")]
    NotMMatrix(String),

    #[error("matrix is not Hurwitz (max real part {0:e})")]
    NotHurwitz(f64),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("agent {agent} never joins the subgraph of block {block}; dwell condition unsatisfiable")]
    StructuralFailure { agent: usize, block: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid gain: {0}")]
    InvalidGain(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors caused by malformed input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NodeOutOfRange { .. }
                | Error::InvalidGraph(_)
                | Error::InvalidSchedule(_)
                | Error::Dimension(_)
                | Error::InvalidSpectrum(_)
                | Error::InvalidGain(_)
                | Error::Config { .. }
                | Error::Unobservable { .. }
                | Error::StructuralFailure { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error type shared by every module of the toolkit.

use thiserror::Error;

/// Errors produced by lattice, norm, mesh and solver operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {dim}: {reason}")]
    UnsupportedDimension { dim: usize, reason: String },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid norm: {0}")]
    InvalidNorm(String),

    #[error("degenerate contact set: found {found}, need at least {needed}")]
    DegenerateContact { found: usize, needed: usize },

    #[error("{what} did not converge (residual {residual:.3e})")]
    Convergence { what: String, residual: f64 },

    #[error("wrong exponent p = {p}: {reason}")]
    WrongExponent { p: f64, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid form: {0}")]
    InvalidForm(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code class used by the command line front end:
    /// 2 for input errors, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence { .. }
            | Error::Resource(_)
            | Error::NumericalDegeneracy(_)
            | Error::Internal(_) => 3,
            _ => 2,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "degenerate importance weights (effective sample size {ess:.1} out of {n_samples}); \
         increase n_samples, use the MMSE proposal, or switch to quadrature"
    )]
    DegenerateWeights { ess: f64, n_samples: usize },

    #[error("degenerate second-moment matrix")]
    DegenerateSecondMoment(#[source] Box<Error>),

    #[error("Gauss-Hermite quadrature supports at most 3 undecoded streams (got {0})")]
    QuadratureTooWide(usize),

    #[error("codebook of {required} codewords exceeds cap {cap}; exhaustive decoding infeasible")]
    CodebookTooLarge { required: u128, cap: usize },

    #[error("theta must be strictly negative (got {0})")]
    InvalidTheta(f64),

    #[error("no sweep rows to emit")]
    EmptyRows,

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

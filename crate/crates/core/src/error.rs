use thiserror::Error;

use crate::control::TimingSequence;
use crate::linalg::StateVector;
use crate::search::{Encoding, Trace};

pub type Result<T> = std::result::Result<T, Error>;

/// Best iterate carried by a non-convergence error so callers can still
/// persist or inspect it.
#[derive(Debug, Clone)]
pub enum BestIterate {
    Vector(StateVector, Trace),
    Encoding(Encoding),
    Synthesis(TimingSequence, Encoding),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (relative residual {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dimension {dim} exceeds configured limit {limit}")]
    CapExceeded { dim: usize, limit: usize },

    #[error("no convergence after {iterations} iterations (best residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Option<Box<BestIterate>>,
    },

    #[error("Raman detuning must be non-zero")]
    ZeroDetuning,

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("postselection probability {probability:e} below 1e-15 (total leakage)")]
    ZeroNormState { probability: f64 },

    #[error("not a density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("columns are linearly dependent; cannot orthonormalize")]
    RankDeficient,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}

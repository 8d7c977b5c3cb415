use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the matching pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {}: line {line}: {msg}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<input>".into()))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        msg: String,
    },
    #[error("invalid mesh: {0}")]
    Validation(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("eigensolver failed to converge: {0}")]
    Convergence(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("resolvent point {re} + {im}i lies on the nonnegative real axis")]
    InvalidResolventPoint { re: f64, im: f64 },
    #[error("spectra are not rescaled: max eigenvalue {max} exceeds 1")]
    NotRescaled { max: f64 },
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("solver stopped after {iterations} iterations with relative gradient {residual:e}")]
    Solver { iterations: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::Numerical(_) => "NumericalError",
            Error::Convergence(_) => "ConvergenceError",
            Error::Dimension(_) => "DimensionError",
            Error::DegenerateSpectrum(_) => "DegenerateSpectrumError",
            Error::InvalidResolventPoint { .. } => "InvalidResolventPoint",
            Error::NotRescaled { .. } => "NotRescaledError",
            Error::Index { .. } => "IndexError",
            Error::Solver { .. } => "SolverError",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Unsupported(_) => "Unsupported",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

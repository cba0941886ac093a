use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian: defect {defect:e} exceeds {tol:e}")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("matrix is not real symmetric within {tol:e}")]
    NotRealSymmetric { tol: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("unitarity defect {defect:e} exceeds {tol:e}")]
    NonUnitary { defect: f64, tol: f64 },

    #[error("eigenvalue {value} at index {index} outside [0, 1] beyond tolerance; spectrum: {spectrum:?}")]
    SpectrumOutOfRange {
        value: f64,
        index: usize,
        spectrum: Vec<f64>,
    },

    #[error("invalid pairing: {0}")]
    InvalidPairing(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("operation not supported for {0} geometry")]
    UnsupportedGeometry(String),

    #[error("invalid subsystem: {0}")]
    InvalidSubsystem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn in_trial(self, trial: u64) -> Self {
        match self {
            e @ Error::Trial { .. } => e,
            e => Error::Trial {
                trial,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Pivot magnitude fell below the singularity threshold during factorization.
    #[error("singular matrix: pivot {pivot:e} at column {column} (threshold {threshold:e})")]
    SingularMatrix {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    /// `A - sigma*M` could not be factorized; retry with a perturbed shift.
    #[error("shift {shift} rejected: {reason}")]
    ShiftRejected { shift: f64, reason: String },

    #[error("eigensolver did not converge after {restarts} restarts ({converged} of {requested} pairs converged)")]
    Convergence {
        restarts: usize,
        converged: usize,
        requested: usize,
    },

    /// Complex Ritz values persisted among the wanted pairs.
    #[error("spectral anomaly: Ritz value {re} + {im}i is not real")]
    SpectralAnomaly { re: f64, im: f64 },

    /// The assembled source system was singular although constraints were applied.
    #[error("assembly bug: {0}")]
    AssemblyBug(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at step {step}: {context}")]
    NonFinite { step: usize, context: String },

    #[error("path blew up at step {step} (|x| = {magnitude:e} exceeds 1e12)")]
    BlowUp { step: usize, magnitude: f64 },

    #[error("stability violation: dt = {dt:e} exceeds the bound {bound:e}")]
    Stability { dt: f64, bound: f64 },

    #[error("quadrature failed to converge: estimated error {estimate:e} after {intervals} intervals")]
    Quadrature { estimate: f64, intervals: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown dataset kind `{0}`")]
    UnknownDatasetKind(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numerics (blow-up, instability,
    /// non-convergence) rather than by the caller's configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::BlowUp { .. }
                | Error::Stability { .. }
                | Error::Quadrature { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

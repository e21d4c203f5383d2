use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    /// Jacobian spectrum falls inside the tolerance band around the imaginary axis.
    #[error("marginal fixed point: eigenvalues {re1:.3e}{im1:+.3e}i, {re2:.3e}{im2:+.3e}i")]
    Marginal {
        re1: f64,
        im1: f64,
        re2: f64,
        im2: f64,
    },

    #[error("unsupported observable `{0}`")]
    UnsupportedObservable(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors raised by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::IntegrationFailure { .. } | Error::Marginal { .. })
    }
}

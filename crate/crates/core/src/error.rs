use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The Riccati matrix stopped being positive definite.
    #[error("Riccati matrix lost positive definiteness at t = {t:.4} s (min eigenvalue {min_eigenvalue:.3e})")]
    IndefiniteRiccati { t: f64, min_eigenvalue: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    ConfigParse { path: String, message: String },

    /// Analytic and finite-difference observability matrices disagree.
    #[error("analytic and numeric D matrices disagree by {deviation:.3e} at t = {t:.4} s")]
    OracleMismatch { t: f64, deviation: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

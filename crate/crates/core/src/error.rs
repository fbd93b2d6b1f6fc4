use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: expected N={expected}, got N={got}")]
    GridMismatch { expected: usize, got: usize },

    /// NaN/Inf appeared in the solution samples.
    #[error("numerical instability at t={t}, dt={dt}, nu={nu}, N={n}")]
    Instability { t: f64, dt: f64, nu: f64, n: usize },

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

use thiserror::Error;

/// Errors surfaced by the key-rate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Sample data cannot support the requested estimate.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Measured statistics are inconsistent with any physical state.
    #[error("data inconsistency: {0}")]
    DataInconsistency(String),

    /// Dimensions of assembled problem data do not agree.
    #[error("build error: {0}")]
    Build(String),

    /// The constraint set admits no state.
    #[error("infeasible problem: {violated}")]
    Infeasible { violated: String },

    /// The conic backend did not reach the requested accuracy.
    #[error("solver failure ({status}): {detail}")]
    Solver { status: String, detail: String },

    /// Numerical linear algebra failed (eigendecomposition, factorization).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration file is malformed or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

use thiserror::Error;

/// Errors raised by the membrane solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("basis index {index} out of range 1..={m}")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("operation requires the adaptive basis family")]
    NotAdaptive,

    #[error("coordinate singularity: {0}")]
    Singularity(String),

    #[error("non-finite {what} at node s = {node}")]
    NonFinite { what: String, node: f64 },

    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("Newton iteration did not converge in {iterations} steps (|g| = {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("continuation failed: {0}")]
    Continuation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

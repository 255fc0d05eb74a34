use thiserror::Error;

/// Errors raised by the sensing, formation and control routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The Fisher information matrix is (numerically) rank deficient, e.g. all
    /// agents lie on a line through the target.
    #[error("singular sensing geometry: det = {det:e}, trace = {trace:e}")]
    SingularGeometry { det: f64, trace: f64 },

    #[error("at least {required} agents are required, got {got}")]
    InsufficientAgents { required: usize, got: usize },

    #[error("invalid communication graph: {0}")]
    InvalidGraph(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

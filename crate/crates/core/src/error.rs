use thiserror::Error;

/// Errors shared by every stage of the allocation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller-side precondition was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// No strictly feasible point exists; carries the blocking constraint.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// The numerical core could not make progress.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Instance exceeds the size an exhaustive routine accepts.
    #[error("instance too large: {0}")]
    Guard(String),
    /// Malformed configuration input.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

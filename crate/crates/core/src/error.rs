use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("state {0} is terminal")]
    TerminalState(usize),

    #[error("action {action} is not available in state {state}")]
    InvalidAction { state: usize, action: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("horizon cap of {0} decisions exceeded")]
    HorizonExceeded(usize),

    #[error("discount must be < 1, got {0}")]
    DiscountTooLarge(f64),

    #[error("candidate set is empty")]
    EmptyCandidateSet,

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("observation carries no tabular state id")]
    MissingStateId,

    #[error("no successor features known for policy embedding {0:?}")]
    UnknownPolicy(Vec<f64>),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("no oracle value for task {0}")]
    MissingOracle(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

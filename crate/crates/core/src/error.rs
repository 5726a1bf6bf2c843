use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("trajectory does not terminate, cycle through states {cycle:?}")]
    NonTerminating { cycle: Vec<String> },

    #[error("observation {observation} has zero probability under action {action}")]
    ImpossibleObservation { action: String, observation: String },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("no threshold in range [{lo}, {hi}]")]
    NoThreshold { lo: f64, hi: f64 },

    #[error("unknown name: {0}")]
    UnknownName(String),

    #[error("{path}:{row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("network error (retryable): {0}")]
    Network(String),

    #[error("store error: {0}")]
    Store(#[from] rusqlite::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("fixed point did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("structural error at node `{node}`: {message}")]
    Structure { node: String, message: String },

    #[error("spec error: {0}")]
    Spec(String),

    #[error("lookahead: access to period {requested} beyond horizon {horizon}")]
    Lookahead { requested: usize, horizon: usize },

    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },

    #[error("strategy `{strategy}` failed at period {period}: {message}")]
    Strategy {
        strategy: String,
        period: usize,
        message: String,
    },

    #[error("zero variance: Sharpe ratio undefined")]
    ZeroVariance,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Network failures may succeed on retry; everything else is permanent.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Network(_))
    }
}

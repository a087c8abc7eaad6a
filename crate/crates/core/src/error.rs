use thiserror::Error;

/// Every fallible operation in the crate reports through this type.
#[derive(Debug, Error)]
pub enum TbrError {
    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("unknown environment id {0}")]
    UnknownEnv(usize),

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix is rank deficient at column {column} (|r_jj| = {pivot:e})")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("matrix is numerically singular: no permutation of nonzero entries exists")]
    Singular,

    #[error("non-finite gradient in parameter group {group}; update skipped")]
    NonFiniteGradient { group: usize },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("forward cache does not match these parameters")]
    StaleCache,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = TbrError> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, expected: impl ToString, got: impl ToString) -> TbrError {
    TbrError::Shape {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

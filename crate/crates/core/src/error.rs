use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("invalid spin value {0} (expected -1 or +1)")]
    InvalidSpin(i8),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exhaustive search over {n_bit} bits exceeds the limit of {limit}")]
    OracleLimit { n_bit: usize, limit: usize },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("BBO loop {loop_index} failed: {source}")]
    Loop {
        loop_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape { expected, actual })
    }
}

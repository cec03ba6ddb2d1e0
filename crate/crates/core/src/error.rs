use thiserror::Error;

/// Errors produced anywhere in the safety layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficiently exciting data: rank {rank} < required {required}")]
    InsufficientExcitation { rank: usize, required: usize },
    #[error("infeasible start: measured state lies inside an (inflated) obstacle or outside the workspace")]
    InfeasibleStart,
    #[error("world too cluttered: rejection sampling failed after {0} draws")]
    WorldTooCluttered(usize),
    #[error("weight file: {0}")]
    WeightFormat(String),
    #[error("malformed log at line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { op, expected, got })
    }
}

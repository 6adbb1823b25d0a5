use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid p* schedule: {0}")]
    InvalidSchedule(String),

    #[error("negative or non-finite value {value} at position {index}")]
    InvalidValue { index: usize, value: f64 },

    #[error("input {0} has no strictly positive entry; scale is undefined")]
    AllZero(usize),

    #[error("empty input")]
    Empty,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("every norm power is below the stability threshold")]
    AllUnderflow,

    #[error("degenerate projection: {0}")]
    DegenerateProjection(&'static str),

    #[error("norm queue is exhausted")]
    Exhausted,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

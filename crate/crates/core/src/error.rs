use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("column length mismatch: variable `{name}` has {got} rows, expected {expected}")]
    ColumnLength {
        name: String,
        got: usize,
        expected: usize,
    },

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unknown operator `{0}`")]
    UnknownOperator(String),

    #[error("unknown operator set `{0}`")]
    UnknownOperatorSet(String),

    #[error("memory budget exceeded: estimated {estimate} bytes, budget {budget} bytes")]
    MemoryBudgetExceeded { estimate: u128, budget: u128 },

    #[error("configuration too large to enumerate: {count} expressions exceeds guard {guard}; use fewer slots or layers")]
    GuardExceeded { count: u128, guard: u128 },

    #[error("index {index} out of range for width {width}")]
    IndexOutOfRange { index: usize, width: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("target column contains no finite values")]
    NonFiniteTarget,

    #[error("unknown problem set `{0}`")]
    UnknownProblemSet(String),

    #[error("integration blew up at t = {time}")]
    IntegrationBlowUp { time: f64 },

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("memory budget exceeded: requested {requested} bytes with {current} of {budget} in use")]
    BudgetExceeded { requested: u64, current: u64, budget: u64 },

    #[error("budget infeasible: a single minimal block needs {needed} bytes but the budget is {budget}")]
    BudgetInfeasible { needed: u64, budget: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("precision mismatch: {left} vs {right}")]
    PrecisionMismatch { left: crate::Precision, right: crate::Precision },

    #[error("k = {k} out of range (must be in 1..={max})")]
    KOutOfRange { k: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("coincident point: offset vector {0} has zero length")]
    CoincidentPoint(usize),

    #[error("requires scaled input: max |x| = {x_max} exceeds 1")]
    RequiresScaledInput { x_max: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("subtask {task_id} failed: {source}")]
    SubTask {
        task_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("result container incomplete: {filled} of {total} slots filled")]
    Incomplete { filled: usize, total: usize },

    #[error("fusion rule for ({producer:?}, {consumer:?}) is already registered")]
    DuplicateFusionRule {
        producer: crate::fusion::ProducerKind,
        consumer: crate::fusion::ConsumerKind,
    },

    #[error("labels must contain both classes")]
    SingleClass,

    #[error("csv parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.position() {
            Some(pos) => Error::Parse {
                row: pos.record() as usize,
                col: 0,
                msg: e.to_string(),
            },
            None => Error::Io(e.to_string()),
        }
    }
}

use thiserror::Error;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing or unexpected column: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },

    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("row {row}: structural-zero violation, a=0 with m_{mediator}=1")]
    StructuralZero { row: usize, mediator: usize },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("complete separation detected in column {column}")]
    Separation { column: usize },

    #[error("monotone partial likelihood detected in column {column}")]
    MonotoneLikelihood { column: usize },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("mediator m_{index} is constant within its fitting subsample")]
    DegenerateMediator { index: usize },

    #[error("{k} binary mediators exceed the enumeration cap of {cap}")]
    EnumerationCap { k: usize, cap: usize },

    #[error(
        "arms (a=1, a*=0) are not identified: Pr(m | A=0) puts no mass on the structural \
         mediators, so the outcome model would be evaluated where A=0 never occurs"
    )]
    UnidentifiedArms,

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("empty risk set at event time {time}")]
    EmptyRiskSet { time: f64 },

    #[error("empty cell: {0}")]
    EmptyCell(String),

    #[error("{failed} of {total} replicates failed (limit 10%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("month {month}: expected {needed} assignments but only {available} eligible subjects remain")]
    PoolExhausted {
        month: usize,
        needed: usize,
        available: usize,
    },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_) => ErrorKind::Io,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            Error::NonConvergence { .. }
            | Error::Separation { .. }
            | Error::MonotoneLikelihood { .. }
            | Error::RankDeficient(_)
            | Error::DegenerateMediator { .. }
            | Error::ZeroDenominator(_)
            | Error::EmptyRiskSet { .. }
            | Error::TooManyFailures { .. }
            | Error::Consistency(_) => ErrorKind::Numeric,
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("zero is outside the convex hull of the constraint rows")]
    HullViolation,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("singular component: {0}")]
    SingularComponent(String),
    #[error("singular calibration gram matrix")]
    SingularGram,
    #[error("certainty unit {unit}: inclusion probability {pi}")]
    CertaintyUnit { unit: usize, pi: f64 },
    #[error("no respondents left after nonresponse")]
    EmptyRespondents,
    #[error("unstable bootstrap quantile: only {0} finite replicates")]
    UnstableQuantile(usize),
    #[error("degenerate: {0}")]
    Degenerate(String),
}

/// Coarse grouping used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Io(_) => ErrorClass::Usage,
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Csv(_)
            | Error::Dimension(_) => ErrorClass::Data,
            _ => ErrorClass::Numerical,
        }
    }
}

use thiserror::Error;

/// Everything that can go wrong while ingesting, fitting or testing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric or missing value at row {row}, column `{column}`")]
    NonNumericCell { row: usize, column: String },
    #[error("no data rows")]
    EmptyData,
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("group size {group_size} is smaller than the varying dimension {p}")]
    GroupTooSmall { group_size: usize, p: usize },
    #[error("{n} rows cannot fill a single group of size {group_size}")]
    TooFewRows { n: usize, group_size: usize },
    #[error("group {group} has a singular Gram matrix (condition estimate {condition:.3e})")]
    SingularGroup { group: usize, condition: f64 },
    #[error("the constant-part Schur complement is singular")]
    SingularSchur,
    #[error("no design points inside the kernel window at u = {0}")]
    EmptyWindow(f64),
    #[error("fewer than {needed} usable points inside the kernel window at u = {u}")]
    RankDeficientWindow { u: f64, needed: usize },
    #[error("evaluation point {u} lies outside the design range [{lo}, {hi}]")]
    OutOfRange { u: f64, lo: f64, hi: f64 },
    #[error("the variance estimate of the statistic is zero")]
    DegenerateVariance,
    #[error("the alternative residual sum of squares is zero")]
    ZeroRss1,
    #[error("restricted RSS {rss0} is below unrestricted RSS {rss1}")]
    NonNested { rss0: f64, rss1: f64 },
    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

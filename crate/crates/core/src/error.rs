use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid knot grid: {0}")]
    InvalidKnotGrid(String),

    #[error("non-finite evaluation point at index {index}: {value}")]
    NonFinitePoint { index: usize, value: f64 },

    #[error("penalty order too high for basis size (order {order}, {size} basis functions)")]
    PenaltyOrderTooHigh { order: usize, size: usize },

    #[error("penalty order must be at least 1")]
    ZeroPenaltyOrder,

    #[error("point outside hazard domain t > s (t = {t}, s = {s})")]
    OutsideHazardDomain { t: f64, s: f64 },

    #[error("invalid record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("invalid bin grid: {0}")]
    InvalidBinGrid(String),

    #[error("records not covered by the bin grid: {}", .ids.join(", "))]
    UncoveredRecords { ids: Vec<String> },

    #[error("inconsistent covariate count for record {id}: expected {expected}, found {found}")]
    CovariateLength {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("no events to fit")]
    NoEvents,

    #[error("invalid smoothing parameter {0}; must be finite and > 0")]
    InvalidRho(f64),

    #[error(
        "penalized system is singular: pivot {pivot} is {value:e} (condition estimate {condition:e})"
    )]
    Singular {
        pivot: usize,
        value: f64,
        condition: f64,
    },

    #[error("collinear covariates: {}", .columns.join(", "))]
    CollinearCovariates { columns: Vec<String> },

    #[error("too few individuals ({n}) for {p} covariates")]
    TooFewIndividuals { n: usize, p: usize },

    #[error("hazard evaluated to {value} at (u = {u}, s = {s}); must be positive")]
    NonPositiveHazard { u: f64, s: f64, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("study failed: {failed} of {total} replicates failed")]
    StudyFailed { failed: usize, total: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

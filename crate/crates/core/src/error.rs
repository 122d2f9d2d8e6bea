use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("point cloud contains a non-finite coordinate at point {0}")]
    NonFinite(usize),

    #[error("unsupported ambient dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),

    #[error("zero extent: all points are identical")]
    ZeroExtent,

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("unequal cardinality: {0} vs {1}")]
    UnequalCardinality(usize, usize),

    #[error("exact EMD limited to n <= {max} points (got {n}); use emd_approx for larger clouds")]
    TooLargeForExact { n: usize, max: usize },

    #[error("unknown template identifier {0:?}")]
    UnknownTemplate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("backward called on an empty tape")]
    EmptyTape,

    #[error("non-finite gradient for parameter {0:?}")]
    NonFiniteGradient(String),

    #[error("training diverged at step {step}: {what}")]
    Divergence { step: usize, what: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("entry {0} has no mode references")]
    MissingModeReferences(usize),

    #[error("reports were computed on different test sets: {0}")]
    MismatchedTestSets(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::NonFiniteGradient(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

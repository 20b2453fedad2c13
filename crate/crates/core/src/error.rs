use thiserror::Error;

/// Errors raised by kernel, classifier and kernel-estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("gaussian kernel width must be positive, got {0}")]
    NonPositiveWidth(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("index {index} out of range for {n} objects")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("kernel has nonpositive trace")]
    DegenerateKernel,

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("labels contain a single class; both -1 and +1 are required")]
    OneClassLabels,

    #[error("singular system; try mu >= {suggested_mu:e}")]
    SingularSystem { suggested_mu: f64 },

    #[error("query needs a kernel row for an abstract-object model")]
    MissingGramRow,

    #[error("knn graph with k = {k} is disconnected ({components} components); increase k")]
    DisconnectedGraph { k: usize, components: usize },

    #[error("infeasible embedding: slack {0:e} below tolerance")]
    InfeasibleEmbedding(f64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("{path}: line {line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },

    #[error("{0}")]
    Usage(String),

    /// Inputs parsed but were rejected by validation.
    #[error("invalid input: {0}")]
    Input(kernreg::Error),

    #[error("numerical failure: {0}")]
    Numerical(kernreg::Error),
}

impl CliError {
    /// 2 for anything the caller can fix in the invocation or input files,
    /// 1 when a computation on valid input fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) | CliError::Write { .. } => 1,
            _ => 2,
        }
    }
}

impl From<kernreg::Error> for CliError {
    fn from(e: kernreg::Error) -> Self {
        use kernreg::Error as E;
        match e {
            E::SingularSystem { .. } | E::InvariantViolation(_) | E::DegenerateKernel | E::InfeasibleEmbedding(_) => {
                CliError::Numerical(e)
            }
            other => CliError::Input(other),
        }
    }
}

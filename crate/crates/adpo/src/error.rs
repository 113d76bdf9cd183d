use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] adpo_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        HarnessError::Parse { path: path.into(), line, message: message.to_string() }
    }

    /// Process exit code: 2 for invalid input, 3 for numerical failure,
    /// 1 for I/O errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(adpo_core::Error::NumericalFailure { .. }) => 3,
            HarnessError::Core(_) | HarnessError::Parse { .. } | HarnessError::Invalid(_) => 2,
            HarnessError::Io { .. } => 1,
        }
    }
}

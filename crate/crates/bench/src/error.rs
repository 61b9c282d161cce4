use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot read image: {message}")]
    UnreadableFile { path: PathBuf, message: String },
    #[error("{path}: image is {found:?} but earlier images are {expected:?}")]
    MixedDimensions {
        path: PathBuf,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: negative entry {value}")]
    NegativeEntry { path: PathBuf, line: usize, value: f64 },
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] nnsvd::Error),
    #[error("{0}")]
    Output(String),
}

impl BenchError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        BenchError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 3 for a convergence failure, 2 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Core(nnsvd::Error::ConvergenceFailure { .. }) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;

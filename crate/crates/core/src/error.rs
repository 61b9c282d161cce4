use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("input matrix has zero Frobenius norm")]
    ZeroInputNorm,
    #[error("matrix is empty")]
    EmptyMatrix,
    #[error("rank {rank} exceeds the maximum {max} allowed for this input")]
    RankTooLarge { rank: usize, max: usize },
    #[error("truncated SVD did not converge after {steps} steps (worst residual {residual:.3e})")]
    ConvergenceFailure { steps: usize, residual: f64 },
    #[error("column {0} of W is identically zero")]
    ZeroColumn(usize),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn mismatch(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::DimensionMismatch { op, left, right }
    }
}

use thiserror::Error;

/// Errors raised by the numerical layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("matrix has eigenvalue {min_eigenvalue:.3e} below the allowed tolerance")]
    IndefiniteBeyondTolerance { min_eigenvalue: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("point has norm {norm:.6} and lies outside the open unit ball")]
    PointOutsideBall { norm: f64 },
    #[error("resolvent is singular at the requested point")]
    SingularResolvent,
    #[error("series has order zero; nothing to shift")]
    OrderZero,
    #[error("variable index {index} out of range for d = {d}")]
    VariableIndex { index: usize, d: usize },
    #[error("span computation did not stabilize: {0}")]
    NotStabilized(String),
    #[error("operator norm {norm:.6} exceeds 1")]
    NotAContraction { norm: f64 },
    #[error("row norm {norm:.6} exceeds 1")]
    NotRowContraction { norm: f64 },
    #[error("colligation is not closely connected")]
    NotCloselyConnected,
    #[error("point has squared norm {norm_sq:.12} instead of 1")]
    NotOnSphere { norm_sq: f64 },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

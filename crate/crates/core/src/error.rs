use thiserror::Error;

use crate::separability::PptSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("total dimension {dim} exceeds the dense cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("invalid subsystem layout: {0}")]
    InvalidLayout(String),

    #[error("state vector norm is {norm}, expected 1")]
    NotNormalized { norm: f64 },

    #[error("matrix is not Hermitian (max entry deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("trace is {trace}, expected 1")]
    BadTrace { trace: f64 },

    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("subset must not be empty")]
    EmptySubset,

    #[error("subsystem index {index} out of range for {len} subsystems")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate subsystem index {0}")]
    DuplicateIndex(usize),

    #[error("layouts do not match: {0}")]
    LayoutMismatch(String),

    #[error("invalid bipartition: {0}")]
    InvalidBipartition(String),

    #[error("subset has {size} subsystems; at least 2 are required")]
    SubsetTooSmall { size: usize },

    #[error("PPT solver did not converge after {} iterations (gap {:e}, residual {:e})",
        .0.iterations, .0.gap(), .0.primal_residual)]
    NotConverged(Box<PptSolution>),

    #[error("Kraus operators are not trace preserving (deviation {deviation:e})")]
    IncompleteKraus { deviation: f64 },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("{name} = {value} is outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },

    #[error("{0}")]
    InvalidArgument(String),
}

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mask selects no voxels")]
    EmptyMask,

    #[error("mean curve has zero norm")]
    ZeroNormMean,

    #[error("too few bandwidth anchors for a quartic fit: {anchors}")]
    TooFewAnchors { anchors: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("ill-conditioned operator: diagonal {min_diagonal:e} vs max entry {max_entry:e}")]
    IllConditioned { min_diagonal: f64, max_entry: f64 },

    #[error("NNLS iteration cap {iterations} exceeded (residual norm {residual:e})")]
    NnlsIterationCap { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(&'static str),
}

impl Error {
    /// Numerical failures as opposed to invalid inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. } | Error::NnlsIterationCap { .. } | Error::Singular(_)
        )
    }
}

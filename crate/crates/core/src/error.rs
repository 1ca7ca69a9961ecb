use thiserror::Error;

/// Errors raised anywhere in the embedding pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClmdsError {
    #[error("matrix is not square: {rows} rows, row {row} has {cols} columns")]
    NotSquare { rows: usize, row: usize, cols: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("negative entry {value} at ({row}, {col})")]
    Negative { row: usize, col: usize, value: f64 },

    #[error("asymmetry {asymmetry:e} at ({row}, {col}) exceeds tolerance")]
    Asymmetric { row: usize, col: usize, asymmetry: f64 },

    #[error("non-zero diagonal {value:e} at index {index}")]
    NonZeroDiagonal { index: usize, value: f64 },

    #[error("ragged rows: expected {expected} columns, row {row} has {got}")]
    Ragged { expected: usize, row: usize, got: usize },

    #[error("invalid clustering: {0}")]
    InvalidClustering(String),

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("k = {k} exceeds the number of points {n}")]
    TooManyClusters { k: usize, n: usize },

    #[error("weights are all zero or leave the point set disconnected")]
    DegenerateWeights,

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("point maps to infinity under the projective transform (w = {w:e})")]
    PointAtInfinity { w: f64 },

    #[error("canonical quadrilateral is not convex (s = {s}, t = {t})")]
    NonConvexCanonical { s: f64, t: f64 },

    #[error("descriptor {index} has zero norm")]
    ZeroNorm { index: usize },

    #[error("descriptor {index} is not unit-norm (norm = {norm})")]
    NotUnitNorm { index: usize, norm: f64 },

    #[error("kernel entry {value} at ({row}, {col}) outside [0, 1]")]
    KernelRange { row: usize, col: usize, value: f64 },

    #[error("invalid sparse selection: {0}")]
    InvalidSparse(String),

    #[error("sampling failed after {attempts} attempts: {reason}")]
    SamplingFailed { attempts: usize, reason: String },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl ClmdsError {
    /// Stable snake_case name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            ClmdsError::NotSquare { .. } => "not_square",
            ClmdsError::EmptyInput => "empty_input",
            ClmdsError::NonFinite { .. } => "non_finite",
            ClmdsError::Negative { .. } => "negative",
            ClmdsError::Asymmetric { .. } => "asymmetric",
            ClmdsError::NonZeroDiagonal { .. } => "non_zero_diagonal",
            ClmdsError::Ragged { .. } => "ragged",
            ClmdsError::InvalidClustering(_) => "invalid_clustering",
            ClmdsError::InvalidHierarchy(_) => "invalid_hierarchy",
            ClmdsError::InvalidConfig(_) => "invalid_config",
            ClmdsError::TooManyClusters { .. } => "too_many_clusters",
            ClmdsError::DegenerateWeights => "degenerate_weights",
            ClmdsError::Degenerate(_) => "degenerate",
            ClmdsError::PointAtInfinity { .. } => "point_at_infinity",
            ClmdsError::NonConvexCanonical { .. } => "non_convex_canonical",
            ClmdsError::ZeroNorm { .. } => "zero_norm",
            ClmdsError::NotUnitNorm { .. } => "not_unit_norm",
            ClmdsError::KernelRange { .. } => "kernel_range",
            ClmdsError::InvalidSparse(_) => "invalid_sparse",
            ClmdsError::SamplingFailed { .. } => "sampling_failed",
            ClmdsError::Parse { .. } => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, ClmdsError>;

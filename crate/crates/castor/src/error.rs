//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CastorError>;

/// Everything that can go wrong while loading data, fitting parameters,
/// transforming series, or training the classifier.
#[derive(Debug, Error)]
pub enum CastorError {
    #[error("line {line}: row has {got} fields but expected {expected}")]
    RaggedDataset {
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("line {line}, field {column}: cannot parse {token:?} as a number")]
    ParseError {
        line: usize,
        column: usize,
        token: String,
    },

    #[error("line {line}, field {column}: value is not finite")]
    NonFiniteValue { line: usize, column: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("series of length {len} is too short to difference (need at least 3 values)")]
    SeriesTooShort { len: usize },

    #[error("invalid fold count {folds} for {samples} samples")]
    InvalidFoldCount { folds: usize, samples: usize },

    #[error(
        "dilated subsequence out of bounds: start {start}, dilation {dilation}, \
         length {length} does not fit in a series of length {series_len}"
    )]
    SubsequenceOutOfBounds {
        start: usize,
        dilation: usize,
        length: usize,
        series_len: usize,
    },

    #[error("shapelet length {0} must be odd and at least 3")]
    InvalidShapeletLength(usize),

    #[error(
        "shapelet with effective length {effective_len} does not fit in a \
         padded series of length {padded_len}"
    )]
    ShapeletTooLong {
        effective_len: usize,
        padded_len: usize,
    },

    #[error("internal padding error: window at position {position} has no in-bounds values")]
    InternalPaddingError { position: usize },

    #[error("shapelet needs {required} time steps but the series has only {series_len}")]
    ShapeletLongerThanSeries {
        required: usize,
        series_len: usize,
    },

    #[error("series length mismatch: expected {expected} time steps, got {actual}")]
    SeriesLengthMismatch { expected: usize, actual: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid features: {0}")]
    InvalidFeatures(String),

    #[error("feature dimension mismatch: model expects {expected} features, got {actual}")]
    FeatureDimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

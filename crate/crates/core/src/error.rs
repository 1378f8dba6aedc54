use thiserror::Error;

/// Errors produced anywhere in the loss engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape {0:?}: expected 2 or 3 axes, each of length >= 1")]
    InvalidShape(Vec<usize>),

    #[error("data length {actual} does not match shape volume {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("mask value {0} is not 0 or 1")]
    InvalidMaskValue(u8),

    #[error("threshold {0} is outside the open interval (0, 1)")]
    InvalidThreshold(f64),

    #[error("bad magic {0:?}, expected \"RVL1\"")]
    BadMagic([u8; 4]),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("unsupported dimensionality {0}")]
    BadDimensionality(u8),

    #[error("truncated payload: need {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("index {index} out of range for volume of {len} voxels")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unknown instance id {0}")]
    UnknownInstance(u32),

    #[error("non-finite value {value} produced by {op}")]
    NonFinite { op: &'static str, value: f64 },

    #[error("node does not belong to this tape")]
    ForeignNode,

    #[error("cube size {0} must be odd and positive")]
    EvenCubeSize(usize),

    #[error("maxpool iterations must be >= 1")]
    ZeroIterations,

    #[error("compound loss weights must have a positive sum")]
    ZeroWeights,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("could not place blob after {attempts} attempts")]
    PlacementFailed { attempts: usize },

    #[error("cannot drop {requested} instances from a mask with {available}")]
    TooManyDrops { requested: usize, available: usize },

    #[error("NaN in rank table at row {row}, column {column}")]
    NanCell { row: usize, column: usize },

    #[error("rank table is not rectangular: row {row} has {found} values, expected {expected}")]
    RaggedTable {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite loss {value} at step {step}")]
    NonFiniteLoss { step: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

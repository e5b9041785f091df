use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range (valid 1..={len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty multi-index")]
    EmptyMultiIndex,

    #[error("unknown builtin system `{0}`")]
    UnknownSystem(String),

    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),

    #[error("non-finite state while integrating a flow")]
    NonFinite,

    #[error("trajectory escaped (|coordinate| > {limit:e}) at program stage {stage}")]
    BlowUp { stage: usize, limit: f64 },

    #[error("point lies outside the grid box")]
    OutOfBox,

    #[error("fields do not span at {point:?}: rank {rank} < dimension {dim} within {step} bracket steps")]
    SpanningFailure {
        point: Vec<f64>,
        rank: usize,
        dim: usize,
        step: u32,
    },

    #[error("rejection sampling gave up after {attempts} attempts ({accepted}/{requested} points accepted)")]
    SamplingExceeded {
        attempts: u64,
        accepted: usize,
        requested: usize,
    },

    #[error("pair {index} unreached within the distance budget")]
    Unreached { index: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub type Result<T> = std::result::Result<T, Error>;

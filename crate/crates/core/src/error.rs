use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("RLE counts sum to {sum}, expected height*width = {expected}")]
    CountsMismatch { sum: u64, expected: u64 },

    #[error("invalid RLE counts: {0}")]
    InvalidCounts(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate boxes: both boxes have zero area")]
    DegenerateBox,

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("assignment references unknown track id {0}")]
    UnknownTrackId(u64),

    #[error("duplicate instance id {0}")]
    DuplicateInstanceId(u64),

    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),

    #[error("image too small for cropping: {width}x{height}")]
    ImageTooSmall { width: u32, height: u32 },

    #[error("track sets refer to different videos: {0}")]
    VideoMismatch(String),

    #[error("unknown video id {0}")]
    UnknownVideoId(u64),

    #[error("unknown category {0}")]
    UnknownCategory(u32),

    #[error("config infeasible: {0}")]
    ConfigInfeasible(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation at {location}: {invariant}")]
    Schema { location: String, invariant: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn schema(location: impl Into<String>, invariant: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            invariant: invariant.into(),
        }
    }
}

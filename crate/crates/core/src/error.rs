use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// Every variant maps to a stable machine-readable [`Error::kind`] string,
/// which the command-line tool reports on failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("stream truncated inside frame {frame}")]
    TruncatedStream { frame: usize },
    #[error("dimension mismatch: expected {expected:?}, found {found:?} in {context}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
        context: String,
    },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("no frames matched {0}")]
    NoFrames(String),
    #[error("unsupported pixel format: {0}")]
    UnsupportedFormat(String),
    #[error("per-second sampling requires a frame rate")]
    MissingFrameRate,
    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("manifest not found: {0}")]
    ManifestMissing(PathBuf),
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("cannot load model: {0}")]
    ModelLoad(String),
    #[error("input {width}x{height} is smaller than the backbone minimum {min}x{min}")]
    InputTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("inference failed: {0}")]
    Inference(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("feature cache: {0}")]
    CacheFormat(String),

    #[error("shape error: {0}")]
    Shape(String),
    #[error("training diverged (non-finite loss) at step {step}")]
    Divergence { step: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("model format: {0}")]
    ModelFormat(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("statistic not defined: {0}")]
    NotDefined(String),
    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("underdetermined: {0}")]
    Underdetermined(String),
    #[error("invalid ratings: {0}")]
    InvalidRatings(String),

    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("severity ladder has no entries")]
    EmptyLadder,

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable identifier for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::TruncatedStream { .. } => "TruncatedStream",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::Decode { .. } => "DecodeError",
            Error::NoFrames(_) => "NoFrames",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::MissingFrameRate => "MissingFrameRate",
            Error::InvalidFrame(_) => "InvalidFrame",
            Error::ManifestMissing(_) => "ManifestMissing",
            Error::ManifestMismatch(_) => "ManifestMismatch",
            Error::ModelLoad(_) => "ModelLoadError",
            Error::InputTooSmall { .. } => "InputTooSmall",
            Error::Inference(_) => "InferenceError",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::CacheFormat(_) => "CacheFormatError",
            Error::Shape(_) => "ShapeError",
            Error::Divergence { .. } => "DivergenceError",
            Error::EmptyInput(_) => "EmptyInput",
            Error::ModelFormat(_) => "ModelFormatError",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NotDefined(_) => "NotDefined",
            Error::DataIntegrity(_) => "DataIntegrityError",
            Error::Underdetermined(_) => "UnderdeterminedError",
            Error::InvalidRatings(_) => "InvalidRatings",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::EmptyLadder => "EmptyLadder",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

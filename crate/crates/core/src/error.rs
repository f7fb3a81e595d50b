use thiserror::Error;

/// Errors produced by the geometry, loss, and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),

    #[error("invalid pose: {0}")]
    Pose(String),

    #[error("invalid depth map: {0}")]
    Depth(String),

    #[error("invalid image: {0}")]
    Image(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no valid pixels to evaluate")]
    NoValidPixels,

    #[error("sequence too short: {len} poses for snippets of {snippet}")]
    SequenceTooShort { len: usize, snippet: usize },

    #[error("optimization diverged at iteration {iter}")]
    Divergence { iter: usize },

    #[error("malformed {format} data: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    Png(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Short stable identifier used as the machine-readable prefix of CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Intrinsics(_) => "intrinsics",
            Error::Pose(_) => "pose",
            Error::Depth(_) => "depth",
            Error::Image(_) => "image",
            Error::Scene(_) => "scene",
            Error::UnknownPreset(_) => "unknown-preset",
            Error::Config(_) => "config",
            Error::NoValidPixels => "no-valid-pixels",
            Error::SequenceTooShort { .. } => "sequence-too-short",
            Error::Divergence { .. } => "divergence",
            Error::Format { .. } => "format",
            Error::Usage(_) => "usage",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Png(_) => "png",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

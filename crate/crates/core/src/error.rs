use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer}: expected {expected} input channels, got {found}")]
    ChannelMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },

    #[error("layer {layer}: input {width}x{height} is too small for this layer")]
    InputTooSmall {
        layer: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("every pyramid level is smaller than the network window")]
    EmptyPyramid,

    #[error("box {0} lies outside the {1}x{2} map")]
    BoxOutOfBounds(String, usize, usize),

    #[error("corrupt weight file: {0}")]
    CorruptWeights(String),

    #[error("model manifest: {0}")]
    Manifest(String),

    #[error("model manifest is missing {0}")]
    MissingStage(String),

    #[error("malformed image file: {0}")]
    ImageFormat(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Divergence { epoch: usize },

    #[error("cannot assemble samples: {0}")]
    Sampling(String),

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_path(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Path { path, source }
    }
}

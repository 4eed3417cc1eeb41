use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("missing ground truth for ids: {}", .0.join(","))]
    MissingGroundTruth(Vec<String>),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("prerequisite not met: {0}")]
    Prerequisite(String),

    #[error("non-finite loss `{name}` at step {step}: {value}")]
    NonFiniteLoss {
        name: String,
        step: usize,
        value: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("io error at {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error("safetensors error: {0}")]
    SafeTensors(#[from] safetensors::SafeTensorError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable category label used by the command line driver for exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) | Error::InvalidArgument(_) | Error::DuplicateId(_) => "input",
            Error::Degenerate(_) | Error::Numerical(_) | Error::NonFiniteLoss { .. } => "numeric",
            Error::MissingGroundTruth(_) | Error::MissingArtifact(_) | Error::Prerequisite(_) => {
                "artifact"
            }
            Error::Checkpoint(_) | Error::SafeTensors(_) => "checkpoint",
            Error::Io { .. } | Error::Image(_) | Error::Json(_) => "io",
            Error::Tensor(_) => "tensor",
        }
    }
}

macro_rules! bail_dim {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::Dimension(format!($($arg)*)))
    };
}
pub(crate) use bail_dim;

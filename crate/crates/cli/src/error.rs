use std::path::PathBuf;

use thiserror::Error;

/// Toolkit errors; each maps to a process exit code category.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(#[from] gop_data::DataError),

    #[error("model: {0}")]
    Model(#[from] gop_model::ModelError),

    #[error("metric: {0}")]
    Core(#[from] gop_core::CoreError),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training aborted: {0}")]
    Train(String),

    #[error("io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("image at {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    /// `(exit code, category label)`.
    pub fn category(&self) -> (i32, &'static str) {
        match self {
            Self::Config(_) => (2, "config"),
            Self::Data(_) => (3, "data"),
            Self::Checkpoint(_) => (4, "checkpoint"),
            Self::Train(_) => (5, "train"),
            Self::Model(_) | Self::Core(_) => (6, "compute"),
            Self::Io { .. } | Self::Image { .. } => (7, "io"),
        }
    }
}

use std::path::PathBuf;

pub type Result<T, E = GanError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum GanError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] lmanon_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GanError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        GanError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

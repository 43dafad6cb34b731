use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, TriageError>;

#[derive(Debug, thiserror::Error)]
pub enum TriageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("instance `{0}` is already labeled")]
    Duplicate(String),
    #[error("label {label} outside 0..{num_classes} for `{instance_id}`")]
    InvalidLabel {
        instance_id: String,
        label: usize,
        num_classes: usize,
    },
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

impl TriageError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TriageError::Io {
            path: path.into(),
            source,
        }
    }
}

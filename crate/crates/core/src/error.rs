use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("item {id}: {msg}")]
    InvalidItem { id: String, msg: String },

    #[error("hop over an empty memory")]
    EmptyMemory,

    #[error("action {action} outside candidate set of size {size}")]
    ActionOutOfRange { action: usize, size: usize },

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFinite(String),

    #[error("episode {0} has no reward; REINFORCE requires a reward on every episode")]
    MissingReward(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("template fixture line {line}: {msg}")]
    Template { line: usize, msg: String },

    #[error("{path}: {source}")]
    File {
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
    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File { path: path.into(), source }
    }
}

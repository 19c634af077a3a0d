use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported wav format: {field} is {found}, expected {expected}")]
    Format {
        field: &'static str,
        found: String,
        expected: String,
    },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("signal is empty")]
    EmptySignal,

    #[error("sample {index} has amplitude {value} outside [-1, 1]")]
    Range { index: usize, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("insufficient active speech: {frames} frames after silence removal, need {required}")]
    InsufficientSignal { frames: usize, required: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

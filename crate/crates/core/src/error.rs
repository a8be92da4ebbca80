use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("pitch {pitch} outside the 88-key range [21, 108]{}", context_suffix(.context))]
    PitchRange { pitch: i32, context: String },

    #[error("line {line}: channel {channel} disagrees with finger sign {finger}")]
    HandConsistency { line: usize, channel: u8, finger: i8 },

    #[error("duplicate note (onset {onset}, pitch {pitch}) in {source_id}")]
    DuplicateNote { onset: f64, pitch: u8, source_id: String },

    #[error("length mismatch: expected {expected} labels, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("part {0} has no annotations")]
    NoAnnotations(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

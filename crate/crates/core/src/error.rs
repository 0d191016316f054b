use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("MIDI parse error at byte {offset}: {message}")]
    MidiParse { offset: usize, message: String },

    #[error("unsupported MIDI file: {0}")]
    UnsupportedMidi(String),

    #[error("song contains no notes")]
    EmptySong,

    #[error("malformed chord matrix at beat {beat}: {message}")]
    MalformedChordMatrix { beat: usize, message: String },

    #[error("invalid chord label {label:?}: {message}")]
    ChordLabel { label: String, message: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("corrupt {what} at byte {offset}: {message}")]
    Decode {
        what: &'static str,
        offset: usize,
        message: String,
    },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at step {step} (batch {batch}): non-finite loss")]
    Divergence { step: usize, batch: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty test set")]
    EmptyTestSet,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn decode(what: &'static str, offset: usize, message: impl Into<String>) -> Self {
        Error::Decode {
            what,
            offset,
            message: message.into(),
        }
    }
}

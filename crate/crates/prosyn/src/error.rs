//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    MalformedRow {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("recording {recording}, sentence {sentence}: {message}")]
    InvalidTree {
        recording: String,
        sentence: String,
        message: String,
    },

    #[error("duplicate recording id {0:?}")]
    DuplicateRecording(String),

    #[error("recording {recording}: {message}")]
    InvalidRecording { recording: String, message: String },

    #[error("audio error in {path}: {message}")]
    Audio { path: PathBuf, message: String },

    #[error("signal is empty")]
    EmptySignal,

    #[error("sample rate {0} Hz is below the supported minimum of {1} Hz")]
    SampleRateTooLow(u32, u32),

    #[error("token {token} spans [{start_ms}, {end_ms}) ms outside track coverage of {cover_ms} ms")]
    SpanOutsideTrack {
        token: String,
        start_ms: f64,
        end_ms: f64,
        cover_ms: f64,
    },

    #[error("empty lexicon")]
    EmptyLexicon,

    #[error("lexicon entry {word:?} has non-positive duration {duration_ms} ms")]
    InvalidLexiconEntry { word: String, duration_ms: f64 },

    #[error("cannot predict a duration for an empty word")]
    EmptyWord,

    #[error("parse error at column {column}: {message}")]
    QueryParse { column: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("design is rank-deficient; collinear columns: {}", .0.join(", "))]
    CollinearColumns(Vec<String>),

    #[error("model fits cover different row counts ({0} vs {1})")]
    RowCountMismatch(usize, usize),

    #[error("extended model must add exactly one column to the basic design ({basic} vs {extended} columns)")]
    NotNested { basic: usize, extended: usize },

    #[error("group flag column is constant; no contrast to estimate")]
    ConstantFlag,

    #[error("under-powered analysis: {rows} usable rows, need at least {min_rows}")]
    UnderPowered { rows: usize, min_rows: usize },

    #[error("invalid generator config: {0}")]
    InvalidSynthConfig(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn row(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::MalformedRow {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}

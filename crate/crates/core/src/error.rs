use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite weight {weight} for term {key}")]
    NonFiniteWeight { key: String, weight: f64 },

    #[error("input text is empty after normalization")]
    EmptyInput,

    #[error("vocabulary has no [UNK] token")]
    MissingUnk,

    #[error("token id {id} out of range for {namespace} vocabulary of size {size}")]
    TokenOutOfRange {
        namespace: &'static str,
        id: u32,
        size: usize,
    },

    #[error("unknown token string {0:?}")]
    UnknownToken(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid candidate set {query}: {reason}")]
    InvalidCandidates { query: String, reason: String },

    #[error("empty batch")]
    EmptyBatch,

    #[error(
        "student score for ({query}, {doc}) is {given} but its representations score {computed}"
    )]
    ScoreMismatch {
        query: String,
        doc: String,
        given: f64,
        computed: f64,
    },

    #[error("loss became non-finite at step {step}")]
    Divergence { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("duplicate document id {0:?}")]
    DuplicateDoc(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors raised while decoding on-disk binary files.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checksum mismatch: header says {expected:#010x}, body hashes to {actual:#010x}")]
    Checksum { expected: u32, actual: u32 },
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
}

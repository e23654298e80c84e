use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty sequence: {0}")]
    EmptySequence(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("bad magic in {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("unsupported version {found} in {path} (expected {expected})")]
    VersionMismatch { path: PathBuf, expected: u32, found: u32 },

    #[error("bad header in {path}: {detail}")]
    Header { path: PathBuf, detail: String },

    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("record {id} in {path}: {detail}")]
    Record { path: PathBuf, id: u64, detail: String },

    #[error("{path}:{line}: {detail}")]
    Format { path: PathBuf, line: usize, detail: String },

    #[error("unknown id {id} referenced at line {line}")]
    UnknownId { id: u64, line: usize },

    #[error("zero-norm vector for id {0}")]
    ZeroNorm(u64),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("class {0} has no examples")]
    EmptyClass(usize),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("record {id}: {source}")]
    Encode {
        id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the CLI and the C API.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Config(_) => "config",
            Error::EmptySequence(_) => "empty-sequence",
            Error::NonFinite(_) => "non-finite",
            Error::State(_) => "state",
            Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::Truncated { .. }
            | Error::Header { .. }
            | Error::Record { .. }
            | Error::Format { .. }
            | Error::Json(_) => "parse",
            Error::UnknownId { .. } => "unknown-id",
            Error::ZeroNorm(_) => "zero-norm",
            Error::Label { .. } | Error::EmptyClass(_) => "label",
            Error::Divergence { .. } => "divergence",
            Error::UndefinedCorrelation(_) => "undefined",
            Error::Encode { source, .. } => source.kind(),
            Error::Io { .. } => "io",
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

use crate::normalize::RenamingMode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus root {0} does not exist")]
    MissingRoot(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("fragment is already renamed ({0}); renaming requires a mode-none fragment")]
    ModeError(RenamingMode),

    #[error("fragment mode {found} does not match configured mode {expected}")]
    ModeMismatch {
        expected: RenamingMode,
        found: RenamingMode,
    },

    #[error("similarity is undefined for an empty line sequence")]
    EmptyFragment,

    #[error("invalid clone configuration: {0}")]
    InvalidConfig(String),

    #[error("cache was built with config {cached}, current config is {current}")]
    CacheConfigMismatch { cached: String, current: String },

    #[error("{file}: function `{function}` at line {line} has no `// @volcano:vuln=<TYPE>` annotation")]
    MissingAnnotation {
        file: String,
        function: String,
        line: u32,
    },

    #[error("unknown vulnerability type `{0}`")]
    UnknownType(String),

    #[error("contract `{0}` has no vulnerability label")]
    UnlabeledContract(String),

    #[error("duplicate signature id `{0}`")]
    DuplicateSignature(String),

    #[error("signature `{sig_id}` normalizes to {lines} lines, below the minimum of {min_lines}")]
    SignatureTooSmall {
        sig_id: String,
        lines: usize,
        min_lines: usize,
    },

    #[error("signature set is empty")]
    EmptySignatureSet,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

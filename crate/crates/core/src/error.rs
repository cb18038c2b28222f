use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a documented domain constraint.
    #[error("validation error: {0}")]
    Validation(String),

    /// A record references an id that does not exist (or an id is duplicated).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Malformed JSON or TOML input.
    #[error("parse error in {path} at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    /// A quantity is mathematically undefined for the given inputs.
    #[error("undefined input: {0}")]
    UndefinedInput(String),

    /// A split manifest's stored digest does not match its content.
    #[error("manifest digest mismatch: stored {stored}, computed {computed}")]
    Tamper { stored: String, computed: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn integrity(msg: impl Into<String>) -> Self {
        Error::Integrity(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Builds a parse error from a `serde_json` failure, converting its
    /// line/column position into a byte offset within `text`.
    pub(crate) fn json(path: impl Into<PathBuf>, text: &str, err: serde_json::Error) -> Self {
        let (line, column) = (err.line(), err.column());
        Error::Parse {
            path: path.into(),
            offset: byte_offset(text, line, column),
            line,
            column,
            message: err.to_string(),
        }
    }

    /// Process exit code for the command-line front end: 2 for I/O, 1 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }

    /// Short machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Integrity(_) => "integrity",
            Error::Parse { .. } => "parse",
            Error::UndefinedInput(_) => "undefined_input",
            Error::Tamper { .. } => "tamper",
            Error::Io { .. } => "io",
        }
    }
}

/// serde_json reports 1-based lines and columns; column 0 means "before the
/// first character of the line" (used for EOF errors).
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

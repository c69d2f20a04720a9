//! Error type shared by every module of the engine.
//!
//! Each error carries a stable machine-readable [`ErrorCode`] so that the CLI,
//! the HTTP service and tests can match on it without parsing messages.

use std::fmt;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    /// I/O failure reading or writing a file.
    Io,
    /// Missing or unexpected column, bad header.
    Schema,
    /// A cell that should be numeric is not.
    Parse,
    /// A numeric value outside its permitted range.
    Range,
    /// A time interval with `end < start`.
    Interval,
    /// Unknown or invalid emotion label.
    Label,
    /// Duplicate key in a mapping file.
    Duplicate,
    /// Malformed CSV (quoting, ragged rows).
    Csv,
    /// A record that parses but violates a record-level invariant.
    Invariant,
    /// Unknown query name.
    Query,
    /// Missing or invalid query parameter.
    Param,
    /// Malformed search pattern.
    Pattern,
    /// Metric computation over no data.
    Empty,
    /// Incomplete model/dataset score grid.
    Grid,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Io => "E_IO",
            ErrorCode::Schema => "E_SCHEMA",
            ErrorCode::Parse => "E_PARSE",
            ErrorCode::Range => "E_RANGE",
            ErrorCode::Interval => "E_INTERVAL",
            ErrorCode::Label => "E_LABEL",
            ErrorCode::Duplicate => "E_DUPLICATE",
            ErrorCode::Csv => "E_CSV",
            ErrorCode::Invariant => "E_INVARIANT",
            ErrorCode::Query => "E_QUERY",
            ErrorCode::Param => "E_PARAM",
            ErrorCode::Pattern => "E_PATTERN",
            ErrorCode::Empty => "E_EMPTY",
            ErrorCode::Grid => "E_GRID",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug)]
pub struct Error {
    code: ErrorCode,
    message: String,
    path: Option<PathBuf>,
    line: Option<u64>,
    source: Option<Box<dyn std::error::Error + Send + Sync + 'static>>,
}

impl Error {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Error {
            code,
            message: message.into(),
            path: None,
            line: None,
            source: None,
        }
    }

    pub(crate) fn at_line(code: ErrorCode, line: u64, message: impl Into<String>) -> Self {
        Error::new(code, message).with_line(line)
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        Error {
            code: ErrorCode::Io,
            message: err.to_string(),
            path: Some(path.to_path_buf()),
            line: None,
            source: Some(Box::new(err)),
        }
    }

    pub(crate) fn csv(err: csv::Error) -> Self {
        if let csv::ErrorKind::Io(_) = err.kind() {
            return Error::new(ErrorCode::Io, err.to_string());
        }
        let line = err.position().map(|p| p.line());
        let mut e = Error::new(ErrorCode::Csv, csv_message(&err));
        e.line = line;
        e.source = Some(Box::new(err));
        e
    }

    pub fn with_line(mut self, line: u64) -> Self {
        self.line = Some(line);
        self
    }

    /// Attaches a file path unless one is already present.
    pub fn with_path(mut self, path: impl AsRef<Path>) -> Self {
        if self.path.is_none() {
            self.path = Some(path.as_ref().to_path_buf());
        }
        self
    }

    pub fn code(&self) -> ErrorCode {
        self.code
    }

    pub fn message(&self) -> &str {
        &self.message
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn line(&self) -> Option<u64> {
        self.line
    }
}

fn csv_message(err: &csv::Error) -> String {
    match err.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("row has {len} fields, expected {expected_len}"),
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_string(),
        _ => err.to_string(),
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.code)?;
        match (&self.path, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{}: ", p.display(), l)?,
            (Some(p), None) => write!(f, "{}: ", p.display())?,
            (None, Some(l)) => write!(f, "line {}: ", l)?,
            (None, None) => {}
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        self.source
            .as_ref()
            .map(|s| s.as_ref() as &(dyn std::error::Error + 'static))
    }
}

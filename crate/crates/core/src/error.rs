//! Error type shared across the toolkit.

use std::fmt;
use std::io;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the library.
///
/// Variants are grouped by what the caller should do about them, which is
/// also what the CLI maps onto process exit codes: validation problems,
/// enumeration/budget overruns, and external-denoiser failures.
#[derive(Debug)]
pub enum Error {
    /// Operand shapes do not conform (cube vs. mask vs. measurement).
    Dimension(String),
    /// A parameter is outside its documented range or a precondition failed.
    Parameter(String),
    /// An enumeration or memory budget would be exceeded.
    Resource(String),
    /// A denoiser violated its contract (e.g. returned the wrong shape).
    Contract(String),
    /// The external denoiser child process failed, hung, or closed its pipe.
    External(String),
    /// A file could not be parsed (bad magic, version, or truncation).
    Format(String),
    /// Underlying I/O failure.
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::Parameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Resource(msg) => write!(f, "resource budget exceeded: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::External(msg) => write!(f, "external denoiser: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

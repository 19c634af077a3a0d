use std::fmt;
use std::path::Path;

use boneair::Error;

/// A failed command, carrying the process exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const IO: u8 = 1;
    pub const USAGE: u8 = 2;

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: Self::USAGE,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: Self::IO,
            message: format!("i/o error on {}: {e}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Format { .. } | Error::Malformed(_) | Error::Checkpoint(_) | Error::EmptySignal => {
                Self::IO
            }
            Error::Json(ref j) if j.is_io() || j.is_syntax() || j.is_eof() => Self::IO,
            Error::Csv(ref c) if c.is_io_error() => Self::IO,
            _ => Self::USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

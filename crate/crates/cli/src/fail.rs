use std::fmt;
use std::path::Path;

use milco_core::Error;

/// A failed command: the process exit code plus a message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const DOMAIN: u8 = 1;
pub const USAGE: u8 = 2;
pub const DIVERGED: u8 = 3;

impl Failure {
    pub fn domain(message: impl Into<String>) -> Self {
        Self {
            code: DOMAIN,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }

    /// Attaches the file being processed to a library error.
    pub fn at(path: &Path, err: Error) -> Self {
        let mut f = Self::from(err);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Divergence { .. } => DIVERGED,
            Error::EmptyInput | Error::InvalidCandidates { .. } | Error::EmptyBatch | Error::ScoreMismatch { .. } => {
                DOMAIN
            }
            _ => USAGE,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

//! Process exit codes and the error type that carries them.

use std::fmt;

use ioredux_core::Error;

pub const OK: i32 = 0;
pub const CONFIG: i32 = 2;
pub const EVALUATION: i32 = 3;
pub const REDUCTION: i32 = 4;
pub const VERIFICATION: i32 = 5;
pub const TARGETS: i32 = 6;
pub const PROVENANCE: i32 = 7;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Maps a core error to an exit code; `fallback` is the stage's own code.
///
/// Config and provenance failures keep their codes whatever stage hits them.
pub fn classify(err: Error, fallback: i32) -> CliError {
    let code = match &err {
        Error::Config(_) | Error::GridTooLarge { .. } | Error::IndexSetTooLarge { .. } => CONFIG,
        Error::Provenance(_) => PROVENANCE,
        Error::Evaluation { .. } | Error::Integration { .. } => EVALUATION,
        _ => fallback,
    };
    CliError::new(code, err.to_string())
}

pub trait Stage<T> {
    fn stage(self, fallback: i32) -> CliResult<T>;
}

impl<T> Stage<T> for Result<T, Error> {
    fn stage(self, fallback: i32) -> CliResult<T> {
        self.map_err(|e| classify(e, fallback))
    }
}

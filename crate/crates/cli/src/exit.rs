//! Mapping from errors to process exit codes.
//!
//! 0 success, 2 usage or invalid input, 3 runtime or numeric failure.

use std::fmt;

pub const USAGE: u8 = 2;
pub const RUNTIME: u8 = 3;

/// Marks an error as the caller's fault regardless of its cause.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn core_code(e: &mdf_core::Error) -> u8 {
    use mdf_core::Error::*;
    match e {
        Numeric(_) => RUNTIME,
        Io(io) if io.kind() != std::io::ErrorKind::NotFound => RUNTIME,
        _ => USAGE,
    }
}

pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<serde_json::Error>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<mdf_core::Error>() {
            return core_code(e);
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == std::io::ErrorKind::NotFound { USAGE } else { RUNTIME };
        }
    }
    RUNTIME
}

//! Composition root: runtime configuration, the `hop` subcommands and the
//! motion store service.

pub mod commands;
pub mod config;
pub mod service;
pub mod store;

use std::io::Write;

use clap::Parser;

pub use commands::{Cli, Command};
pub use config::RuntimeConfig;
pub use service::{router, AppState};
pub use store::{FaultPoint, MotionStore, Precondition, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        CliError::Usage(m.into())
    }

    pub fn runtime(m: impl Into<String>) -> Self {
        CliError::Runtime(m.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 for usage errors, 2 for runtime
/// failures.
pub fn run<I, S>(args: I, vars: Vec<(String, String)>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match commands::execute(cli, vars, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "hop: {e}");
            e.exit_code()
        }
    }
}

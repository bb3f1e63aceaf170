//! Command-line front end for `mtdistill`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! failure.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use config::{parse_config, parse_config_str, CliConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Data,
            message: message.into(),
        }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl From<mtdistill::Error> for CliError {
    fn from(e: mtdistill::Error) -> Self {
        use mtdistill::Error as E;
        let kind = match &e {
            E::Usage(_) => ExitKind::Usage,
            E::NonFinite(_) | E::Diverged { .. } => ExitKind::Numeric,
            E::Shape { .. }
            | E::State(_)
            | E::Format { .. }
            | E::Truncated { .. }
            | E::Io { .. }
            | E::Degenerate(_)
            | E::StaleCheckpoint { .. } => ExitKind::Data,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

/// Parse `argv` (including the program name), run the command and return the
/// process exit code. Results go to `out`, diagnostics to `err`.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match commands::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return 1;
            }
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    match commands::dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

/// [`run_with`] on the process's standard streams.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

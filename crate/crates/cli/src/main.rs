//! `fecg`: generate datasets, train the complex UNet, evaluate methods and
//! extract fetal traces.
//!
//! Every command accepts `--config FILE` (JSON) whose values are overridden by
//! explicit flags, and writes the fully resolved configuration next to its
//! outputs. Relative `--out` paths are placed under `$FECG_OUTPUT_ROOT` when
//! that variable is set.

mod commands;
mod plot;

use std::process::ExitCode;

use clap::Parser;
use fecg_core::Error;

use commands::Cli;

/// Exit code for unusable arguments or configuration.
pub const EXIT_USAGE: u8 = 2;
/// Exit code for unreadable, corrupt or inconsistent data.
pub const EXIT_DATA: u8 = 3;
/// Exit code for numerical failures (diverged training, undefined metrics).
pub const EXIT_NUMERICAL: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numerical(_) | Error::UndefinedMetric(_) => EXIT_NUMERICAL,
        Error::Record { source, .. } => exit_code(source),
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

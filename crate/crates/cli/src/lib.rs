//! Batch front end: argument and config parsing, dataset ingestion, and
//! result writers around `pbi-core`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

use std::ffi::OsString;

pub use config::{parse_config, RunConfig};
pub use error::CliError;

/// Runs the CLI on `argv` and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let (cli, config) = match parse_config(argv) {
        Ok(parsed) => parsed,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match commands::execute(cli, &config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Command-line driver. [`run`] is what the `lendsim` binary calls; tests call
//! it in-process.

pub mod args;
mod commands;
mod config;
pub mod error;

use std::ffi::OsString;
use std::time::Instant;

use clap::Parser;

use crate::args::Cli;
use crate::error::{CliError, EXIT_VALIDATION};

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let started = Instant::now();
    let raw: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let tokens = match config::expand(raw) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(tokens) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let threads = match cli.threads {
        Some(0) => {
            return fail(&CliError::Validation(vec![
                "--threads: must be at least 1".into()
            ]))
        }
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return EXIT_VALIDATION;
        }
    };
    let info = commands::RunInfo {
        command: cli.command.name(),
        threads,
        started,
    };
    match pool.install(|| commands::execute(&cli.command, &info)) {
        Ok(()) => 0,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

//! Command-line front end: `recover` runs the solver on files, `bench`
//! runs Monte Carlo sweeps, `gen` writes reproducible fixtures.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

pub mod commands;
pub mod io;
pub mod settings;
pub mod spec_file;

use std::ffi::OsString;
use std::fmt;

use clap::{Parser, Subcommand};

use commands::{BenchArgs, GenArgs, RecoverArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// An error caused by bad flags or inputs rather than by the computation.
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        UsageError(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "vsp", version, about = "Block-sparse signal recovery by variance state propagation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recover x from y = A x + w.
    Recover(RecoverArgs),
    /// Run a benchmark sweep.
    Bench(BenchArgs),
    /// Write a synthetic fixture.
    Gen(GenArgs),
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Recover(a) => commands::cmd_recover(a),
        Command::Bench(a) => commands::cmd_bench(a),
        Command::Gen(a) => commands::cmd_gen(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

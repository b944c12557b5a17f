//! Subcommand implementations.

mod diversity;
mod inspect;
mod plotdata;
mod serve;
mod simulate;

use std::fmt;

use anyhow::Result;

use crate::args::Command;

/// Bad input detected after argument parsing; exits with status 1.
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

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate::run(a),
        Command::Serve(a) => serve::run(a),
        Command::Inspect(a) => inspect::run(a),
        Command::Diversity(a) => diversity::run(a),
        Command::Plotdata(a) => plotdata::run(a),
    }
}

//! Command-line front end for the `chipsim` simulator.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use args::{Cli, Command};
use error::Result;

/// Runs one parsed command and returns what should be printed on success.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Plan(a) => commands::plan(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::Compare(a) => commands::compare(a),
        Command::Figdata(a) => commands::figdata(a),
        Command::Presets => Ok(commands::list_presets()),
    }
}

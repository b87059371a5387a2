//! Command-line front end: problem loading, experiment runs and
//! machine-readable output. The binary is a thin wrapper around [`run`].

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod problem_file;

pub use args::Cli;
pub use error::{CliError, Result};

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    use args::Command;
    match &cli.command {
        Command::Flow(a) => commands::cmd_flow(a).map(drop),
        Command::Compare(a) => commands::cmd_compare(a).map(drop),
        Command::Analyze(a) => commands::cmd_analyze(a).map(drop),
        Command::Sweep(a) => commands::cmd_sweep(a).map(drop),
    }
}

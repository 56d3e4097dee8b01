//! Command-line front end: file formats, configuration, synthetic data and
//! reports around `alphacross-core`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod generate;
pub mod input;
pub mod report;

use args::{Cli, Command};
use commands::Output;
use error::CliResult;

/// Runs one subcommand. JSON goes to the command's `--out` path when given.
pub fn run(cli: &Cli) -> CliResult<Output> {
    let (result, out) = match &cli.command {
        Command::Optimize(a) => (commands::optimize(a), a.out.as_deref()),
        Command::RhoStar(a) => (commands::rho_star(a), a.out.as_deref()),
        Command::Capacity(a) => (commands::capacity(a), a.out.as_deref()),
        Command::Regress(a) => (commands::regress(a), a.out.as_deref()),
        Command::Oracle(a) => (commands::oracle(a), a.out.as_deref()),
        Command::Generate(a) => (commands::generate_cmd(a), None),
    };
    let output = result?;
    if let Some(path) = out {
        commands::write_json(path, &output.json)?;
    }
    Ok(output)
}

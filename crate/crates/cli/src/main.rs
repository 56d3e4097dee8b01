use std::process::ExitCode;

use alphacross_cli::args::Cli;
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match alphacross_cli::run(&cli) {
        Ok(out) => {
            print!("{}", out.text);
            match out.failure {
                None => ExitCode::SUCCESS,
                Some(e) => {
                    eprintln!("{}", e.to_json());
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

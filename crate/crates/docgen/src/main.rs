use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Render docs/math-index.md and check documentation links and coverage.
#[derive(Parser)]
#[command(name = "alphacross-docgen", version)]
struct Args {
    /// Repository root
    #[arg(long, default_value = ".")]
    root: PathBuf,
    /// Fail instead of rewriting an out-of-date index
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match alphacross_docgen::build(&args.root, args.check) {
        Ok(r) => {
            println!(
                "{} index entries cover {} public functions; {} markdown files checked{}",
                r.entries,
                r.functions,
                r.files_checked,
                if r.written { "; index rewritten" } else { "" }
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

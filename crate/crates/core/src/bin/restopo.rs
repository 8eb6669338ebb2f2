use std::process::ExitCode;

use clap::Parser;
use restopo::cli::{configure_threads, run, Cli};
use restopo::Error;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| run(&cli));
    match result {
        Ok(manifest) => {
            println!("{}: {} files written", manifest.command, manifest.outputs.len() + 1);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("restopo: {e}");
            // Divergence gets its own status so scripts can tell it apart.
            ExitCode::from(if matches!(e, Error::Diverged(_)) { 3 } else { 1 })
        }
    }
}

//! `prodex`: CLI for producer-side interleaving experiments.
//!
//! Exit codes: 0 success, 1 failed audit (`check`), 2 usage/config error.

mod cli;
mod commands;
mod config;

use clap::Parser;

fn main() {
    let parsed = cli::Cli::parse();
    match commands::run(parsed.command) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(2);
        }
    }
}

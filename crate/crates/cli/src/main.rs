mod args;
mod commands;
mod context;
mod error;
mod input;
mod params;
mod report;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bounds(a) => commands::bounds(a),
        Command::Frechet(a) => commands::frechet(a),
        Command::Ci(a) => commands::ci(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Preset(a) => commands::preset(a),
        Command::Validate(a) => commands::validate(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        let mut src = std::error::Error::source(&e);
        while let Some(s) = src {
            eprintln!("  caused by: {s}");
            src = s.source();
        }
        std::process::exit(e.exit_code());
    }
}

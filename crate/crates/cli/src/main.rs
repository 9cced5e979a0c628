//! `snowkit`: corrupt, tile, evaluate and monitor nuclei datasets.
//!
//! Every run prints one JSON summary line on stdout. Exit status is 0 on
//! success, 1 for configuration errors and 2 for data errors.

mod args;
mod commands;
mod error;
mod monitor;
mod staging;

use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

use args::{Cli, Command};
use error::CliError;

fn run(cli: Cli) -> Result<Value, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::Corrupt(a) => commands::corrupt(&a),
        Command::Tile(a) => commands::tile(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Monitor(a) => monitor::run(&a),
        Command::Report(a) => commands::report(&a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            if code != 0 {
                println!("{}", json!({"status": "error", "kind": "config", "exit_code": 1}));
            }
            return ExitCode::from(code);
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(mut summary) => {
            let mut line = json!({"command": name, "status": "ok"});
            if let (Some(l), Some(s)) = (line.as_object_mut(), summary.as_object_mut()) {
                l.append(s);
            }
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("snowkit {name}: error: {e}");
            println!(
                "{}",
                json!({"command": name, "status": "error", "kind": e.kind(), "exit_code": e.exit_code(), "message": e.to_string()})
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

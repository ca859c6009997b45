use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sigswap::run::{execute, Command, RunConfig};
use sigswap::Error;

/// Disentangled signal synthesis pipeline.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// One of: toygen, select, train, synth, augment, denoise, eval, probe.
    command: String,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.iterations=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(cli: Cli) -> Result<serde_json::Value, Error> {
    let command: Command = cli.command.parse()?;
    let config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let config = config.with_overrides(&cli.overrides)?;
    execute(command, &config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(64);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

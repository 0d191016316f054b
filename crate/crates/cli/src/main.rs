mod args;
mod commands;
mod config;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use config::{CliConfig, Paths};
use error::{CliResult, ExitClass};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::from(ExitClass::Usage as u8),
                _ => {
                    eprintln!("hint: run `polydis --help` for the list of commands and flags");
                    ExitCode::from(ExitClass::Usage as u8)
                }
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let paths = Paths {
        root: cli.data_root.clone().or_else(|| config.data_root.clone()),
    };
    let ctx = commands::Context { config, paths };
    let mut manifest = commands::run(&ctx, &cli.command)?;
    if let Some(p) = &cli.config {
        manifest.inputs.insert(0, p.clone());
    }
    let out = commands::out_dir(&cli.command);
    let written = manifest.write(out)?;
    log::info!("{} finished; manifest {}", cli.command.name(), written.display());
    Ok(())
}

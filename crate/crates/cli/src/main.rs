//! `mdf`: dataset building, stain normalization, training, sampling and
//! evaluation for genotype-conditional diffusion on histology patches.

mod args;
mod commands;
mod exit;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("MDF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| exit::usage(format!("MDF_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    log::debug!("using {n} worker threads");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::MakeDataset(a) => commands::dataset::run(a),
        Command::StainNormalize(a) => commands::stain::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Sample(a) => commands::sample::run(a),
        Command::Embed(a) => commands::evaluate::embed(a),
        Command::Evaluate(a) => commands::evaluate::evaluate(a),
        Command::Survey(a) => commands::evaluate::survey(a),
        Command::Config(a) => commands::print_config(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(cli.log_level.as_str()))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::code_for(&err))
        }
    }
}

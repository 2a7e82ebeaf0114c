pub mod dataset;
pub mod evaluate;
pub mod sample;
pub mod stain;
pub mod train;

use std::path::Path;

use anyhow::Context;
use mdf_core::config::RunConfig;
use serde::Serialize;

use crate::args::ConfigArgs;

pub fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("invalid config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

/// Pretty JSON on stdout, or into `out` when given.
pub fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

pub fn print_config(args: ConfigArgs) -> anyhow::Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    println!("{}", cfg.to_json());
    Ok(())
}

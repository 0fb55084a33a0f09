use std::path::PathBuf;
use std::process::ExitCode;

use blends_core::pipeline::{self, Mode, ProviderChoice, RunConfig, StageError};
use blends_core::NavError;
use clap::Parser;
use serde_json::json;

/// Post-processing INS/GNSS smoothing: simulate, filter, smooth and fuse
/// learned corrections.
///
/// Log verbosity is read from BLENDS_LOG (error, warn, info, debug, trace).
#[derive(Debug, Parser)]
#[command(name = "blends", version)]
struct Cli {
    /// TOML run configuration. Without it the built-in study setup is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// simulate, ekf, tfs, rtss, blends or motivation-study.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// zero, oracle or file:<path>.
    #[arg(long)]
    provider: Option<String>,
}

fn build_config(cli: &Cli) -> Result<RunConfig, NavError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::motivation_study(),
    };
    if let Some(mode) = &cli.mode {
        cfg.mode = mode.parse::<Mode>()?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(p) = &cli.provider {
        cfg.provider = p.parse::<ProviderChoice>()?;
    }
    Ok(cfg)
}

fn report(err: &NavError, stage: &str) -> ExitCode {
    let line = json!({
        "error": err.kind(),
        "code": err.exit_code(),
        "stage": stage,
        "message": err.to_string(),
    });
    eprintln!("{line}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BLENDS_LOG", "warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&NavError::Argument(e.to_string().trim().to_string()), "arguments"),
    };
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => return report(&e, "config"),
    };
    match pipeline::run_pipeline(&cfg) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable summary"));
            ExitCode::SUCCESS
        }
        Err(StageError { stage, error }) => report(&error, stage),
    }
}

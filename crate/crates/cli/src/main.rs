mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dismisl_core::{Error, ErrorClass, Result};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "dismisl",
    version,
    about = "Percentile-distribution multiple-instance survival experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for data generation and training, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic bags, a manifest and a provenance record.
    Synth(Common),
    /// Train one model with early stopping and save it.
    Train(Common),
    /// Cross-validate a strategy, or each variant of a sweep.
    Cv(Common),
    /// Cross-validate DeepDisMISL and the five baselines.
    Baselines(Common),
    /// Split a held-out cohort into high and low risk and compare survival.
    Stratify(Common),
    /// Mean tile score at each percentile per risk decile.
    Profile(Common),
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 3,
        ErrorClass::Data => 4,
        ErrorClass::Optimization => 5,
        ErrorClass::Io => 6,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("DISMISL_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "DISMISL_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let (common, f): (&Common, fn(&RunConfig) -> Result<()>) = match &cli.command {
        Command::Synth(c) => (c, commands::synth),
        Command::Train(c) => (c, commands::train_cmd),
        Command::Cv(c) => (c, commands::cv),
        Command::Baselines(c) => (c, commands::baselines),
        Command::Stratify(c) => (c, commands::stratify),
        Command::Profile(c) => (c, commands::profile),
    };
    let out = match &common.out {
        Some(o) if o.is_relative() => {
            let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
            Some(cwd.join(o))
        }
        o => o.clone(),
    };
    let cfg = RunConfig::load(&common.config, out, common.seed)?;
    f(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

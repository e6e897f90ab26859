//! `feduaa`: generate synthetic federations, train, check gradients and sweep noise.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use feduaa_core::Error;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "feduaa",
    version,
    about = "Federated evidential learning with uncertainty-aware aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment document (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the document's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write client CSVs and a manifest.
    Generate(Common),
    /// Run the federation and write logs, checkpoints and the evaluation report.
    Train(Common),
    /// Compare analytic loss gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        cases: u64,
        #[arg(long, hide = true)]
        inject_tce_sign_flip: bool,
    },
    /// Average AUC of each aggregation method under Gaussian test-time noise.
    NoiseSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated noise variances; overrides `noise.sigmas`.
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Shape(_) | Error::Domain(_) | Error::Degenerate(_) => 2,
        Error::Io { .. } | Error::Parse { .. } => 3,
        Error::Numeric(_) | Error::NonFiniteLoss { .. } => 4,
    }
}

fn resolve(common: &Common) -> feduaa_core::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    let out = cfg.output.dir.clone();
    Ok((cfg, out))
}

fn run(cli: Cli) -> feduaa_core::Result<bool> {
    match cli.command {
        Command::Generate(common) => {
            let (cfg, out) = resolve(&common)?;
            commands::generate_cmd(&cfg, &out)?;
        }
        Command::Train(common) => {
            let (cfg, out) = resolve(&common)?;
            commands::train_cmd(&cfg, &out)?;
        }
        Command::Gradcheck {
            seed,
            cases,
            inject_tce_sign_flip,
        } => return commands::gradcheck_cmd(seed, cases as usize, inject_tce_sign_flip),
        Command::NoiseSweep { common, sigmas } => {
            let (mut cfg, out) = resolve(&common)?;
            if let Some(sigmas) = sigmas {
                cfg.noise.sigmas = sigmas;
                cfg.validate()?;
            }
            commands::noise_sweep_cmd(&cfg, &out)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

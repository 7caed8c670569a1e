//! `intermodal`: equilibrium solving, shock analysis, panel generation,
//! estimation and Monte Carlo studies driven by a TOML config file.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 solver failure,
//! 5 estimation failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Output;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "intermodal",
    version,
    about = "Coach/airline fare competition: equilibrium, simulation and panel IV estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the Nash equilibrium of the [equilibrium] calibration.
    Equilibrium(Common),
    /// Comparative statics for the [[shock.scenarios]] list.
    Shock(Common),
    /// Write a synthetic panel CSV from [generate].
    Generate(Common),
    /// Estimate the pricing equation on a panel CSV per [estimate].
    Estimate(Common),
    /// Run the replication study in [montecarlo].
    Montecarlo(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (default: [output].dir, else the current directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed; overrides every seed in the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo replications.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let (Command::Equilibrium(common)
    | Command::Shock(common)
    | Command::Generate(common)
    | Command::Estimate(common)
    | Command::Montecarlo(common)) = &cli.command;
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed.or(cfg.seed) {
        cfg.apply_seed(seed);
    }
    let out = Output::new(cfg.output_dir(common.out.as_deref()))?;
    match cli.command {
        Command::Equilibrium(_) => commands::cmd_equilibrium(&cfg, &out),
        Command::Shock(_) => commands::cmd_shock(&cfg, &out),
        Command::Generate(_) => commands::cmd_generate(&cfg, &out),
        Command::Estimate(_) => commands::cmd_estimate(&cfg, &out),
        Command::Montecarlo(ref c) => commands::cmd_montecarlo(&cfg, &out, c.threads.map(usize::from)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `distgen` command-line front end: configuration, experiment commands,
//! CSV/JSON persistence and SVG figures.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;
pub mod plot;

use std::path::PathBuf;
use std::time::{Instant, SystemTime};

use clap::{Args, Parser, Subcommand};

use crate::commands::{Globals, Outcome};
pub use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "distgen",
    version,
    about = "Generalization experiments and bounds for distributed learning"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON configuration file; defaults apply to omitted keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Use the synthetic two-Gaussian task instead of MNIST.
    #[arg(long, global = true)]
    pub synthetic: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Skip SVG output.
    #[arg(long, global = true)]
    pub no_plots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Distributed vs centralized SVM generalization gap over K.
    DsvmSweep,
    /// Population risk and empirical risk difference over K, with the K → ∞ limit.
    PopulationStudy,
    /// Federated SGLD runs and their generalization bound.
    Fsgld,
    /// Rate-distortion solver for a JSON instance (given with --config).
    RdSolve,
    /// Monte Carlo check of the compression distortion lemma.
    JlValidate,
    /// Evaluates the DSVM bounds.
    Bounds,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::DsvmSweep => "dsvm-sweep",
            Command::PopulationStudy => "population-study",
            Command::Fsgld => "fsgld",
            Command::RdSolve => "rd-solve",
            Command::JlValidate => "jl-validate",
            Command::Bounds => "bounds",
        }
    }
}

fn dispatch(cli: &Cli, g: &Globals) -> Result<Outcome> {
    let path = cli.global.config.as_deref();
    match cli.command {
        Command::DsvmSweep => commands::dsvm_sweep(config::load(path)?, g),
        Command::PopulationStudy => commands::population_study(config::load(path)?, g),
        Command::Fsgld => commands::fsgld(config::load(path)?, g),
        Command::JlValidate => commands::jl_validate(config::load(path)?, g),
        Command::Bounds => commands::bounds(config::load(path)?, g),
        Command::RdSolve => {
            let path = path
                .ok_or_else(|| CliError::Config("rd-solve needs --config INSTANCE.json".into()))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            commands::rd_solve(config::parse_json(&text, path)?, g)
        }
    }
}

/// Runs one command and writes its run record next to its outputs.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let g = Globals {
        out: cli.global.out.clone(),
        seed: cli.global.seed,
        synthetic: cli.global.synthetic,
        plots: !cli.global.no_plots,
    };
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut outcome = match cli.global.threads {
        None => dispatch(cli, &g)?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::ThreadPool(e.to_string()))?
            .install(|| dispatch(cli, &g))?,
    };
    let timing = output::Timing::new(started, clock.elapsed());
    let record = commands::write_record(&g.out, cli.command.name(), &outcome, timing)?;
    outcome.files.push(record);
    Ok(outcome)
}

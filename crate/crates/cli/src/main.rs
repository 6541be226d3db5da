//! `akm`: estimate, decompose and bias-correct two-way fixed-effects wage
//! models from the command line.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{sha256_file, FileDigest, OutputDir};

#[derive(Debug, Parser)]
#[command(
    name = "akm",
    version,
    about = "Two-way fixed-effects wage decompositions with limited-mobility bias correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, short = 'c', global = true)]
    config: Option<PathBuf>,
    /// Input panel (delimited file with worker, firm, period, log_wage columns).
    #[arg(long, short = 'i', global = true)]
    input: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,
    /// Top-level seed; overrides every per-stage seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated covariate columns.
    #[arg(long, global = true, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Config override as dotted.key=value, e.g. `solver.tol=1e-12`. Repeatable.
    #[arg(long = "param", short = 'p', global = true)]
    params: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Read and validate a panel.
    Validate,
    /// Restrict a panel to its largest or leave-one-out connected set.
    Connect,
    /// Estimate worker and firm effects on a connected panel.
    Estimate,
    /// Plug-in variance decomposition.
    Decompose,
    /// Bias-corrected variance decomposition.
    Correct,
    /// Sub-sampling diagnostic of plug-in sorting estimates.
    Subsample,
    /// Mean wages of movers around job changes.
    Eventstudy,
    /// Generate a synthetic panel with known effects.
    Simulate,
    /// validate, connect, estimate, decompose and correct in one run.
    Pipeline,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Connect => "connect",
            Command::Estimate => "estimate",
            Command::Decompose => "decompose",
            Command::Correct => "correct",
            Command::Subsample => "subsample",
            Command::Eventstudy => "eventstudy",
            Command::Simulate => "simulate",
            Command::Pipeline => "pipeline",
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let overrides = Overrides {
        seed: cli.seed,
        threads: cli.threads,
        input: cli.input,
        output: cli.out,
        covariates: cli.covariates,
        params: cli.params,
    };
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot size thread pool: {e}")))?;
    }
    let mut inputs = Vec::new();
    if let Some(path) = &cli.config {
        inputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_file(path)? });
    }
    let command = cli.command;
    let loaded = match command {
        Command::Simulate => None,
        _ => Some(commands::load(&config)?),
    };
    let mut out = OutputDir::create(&config.output())?;
    if let Some(l) = &loaded {
        inputs.push(FileDigest { path: l.digest.path.clone(), sha256: l.digest.sha256.clone() });
    }
    let panel = loaded.as_ref().map(|l| &l.panel);
    match command {
        Command::Validate => commands::validate(&config, &mut out, loaded.as_ref().unwrap())?,
        Command::Connect => {
            commands::connect(&config, &mut out, panel.unwrap())?;
        }
        Command::Estimate => {
            commands::estimate(&config, &mut out, panel.unwrap())?;
        }
        Command::Decompose => {
            let est = commands::estimate(&config, &mut out, panel.unwrap())?;
            commands::decompose(&config, &mut out, panel.unwrap(), &est)?;
        }
        Command::Correct => {
            commands::correct(&config, &mut out, panel.unwrap(), None)?;
        }
        Command::Subsample => commands::subsample(&config, &mut out, panel.unwrap())?,
        Command::Eventstudy => commands::eventstudy(&config, &mut out, panel.unwrap())?,
        Command::Simulate => commands::simulate(&config, &mut out)?,
        Command::Pipeline => commands::pipeline(&config, &mut out, loaded.as_ref().unwrap())?,
    }
    let seeds = json!({
        "seed": config.seed,
        "simulate": config.simulate.seed,
        "subsample": config.subsample.seed,
        "correct": config.correct.seed,
    });
    out.finish(command.name(), &config.to_json(), &seeds, &inputs)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit as u8)
        }
    }
}

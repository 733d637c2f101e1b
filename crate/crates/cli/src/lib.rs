//! Command-line pipeline over `survkit`: `prep`, `synth`, `hpo`, `train-eval` and `explain`.
//!
//! Each verb reads a flat `key = value` config (see [`config`]), applies command-line
//! overrides and writes its artifacts under the output directory. All randomness is derived
//! from the master seed through [`seeds::derive_seed`].

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod seeds;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "survkit", version, about = "Survival model comparison pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated model families.
    #[arg(long, global = true)]
    pub families: Option<String>,
    /// random, tpe, cmaes, a comma-separated list, or all.
    #[arg(long, global = true)]
    pub sampler: Option<String>,
    /// Trials per study.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Cross-validation folds.
    #[arg(long, global = true)]
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthFormat {
    Cohort,
    Registry,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, split and encode the input into train.csv and test.csv.
    Prep,
    /// Write a seeded synthetic cohort (or registry extract) to synth.csv.
    Synth {
        #[arg(long, value_enum)]
        format: Option<SynthFormat>,
    },
    /// Cross-validated hyperparameter studies; writes studies/ and best_params.json.
    Hpo,
    /// Train every family and write metrics, curves and model files.
    TrainEval,
    /// Permutation importance and Shapley attribution for the saved models.
    Explain,
}

/// Config file (or defaults) with the command-line overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(f) = &cli.families {
        config.families = config::parse_families(f).map_err(CliError::Config)?;
    }
    if let Some(s) = &cli.sampler {
        config.samplers = config::parse_samplers(s).map_err(CliError::Config)?;
    }
    if let Some(t) = cli.trials {
        config.n_trials = t;
    }
    if let Some(k) = cli.folds {
        config.k_folds = k;
    }
    if let Command::Synth { format: Some(f) } = cli.command {
        config.synth.format = match f {
            SynthFormat::Cohort => config::InputFormat::Cohort,
            SynthFormat::Registry => config::InputFormat::Registry,
        };
    }
    config.validate()?;
    Ok(config)
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = resolve_config(cli)?;
    match cli.command {
        Command::Prep => commands::prep::run(&config).map(|_| ()),
        Command::Synth { .. } => commands::synth::run(&config).map(|_| ()),
        Command::Hpo => commands::hpo::run(&config).map(|_| ()),
        Command::TrainEval => commands::train_eval::run(&config).map(|_| ()),
        Command::Explain => commands::explain::run(&config).map(|_| ()),
    }
}

/// Parses `args` (including the program name), runs the verb and returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! The `irsbench` command line: one executable, one subcommand per pipeline
//! stage, all driven by a single experiment config.

mod commands;
pub mod config;
pub mod plot;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::data::RatingFormat;
use crate::error::{Error, Result};

pub use commands::{inputs_digest, Context, PolicyChoice};
pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "irsbench", version, about = "Interactive recommender benchmarking and long-term-effect checks")]
pub struct Cli {
    /// Experiment config file (sectioned key = value)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override every seed in the config
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for evaluation and search (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Output directory for models and reports
    #[arg(long, global = true, value_name = "DIR", default_value = "irs_out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and k-core filter a rating log (or generate synthetic logs)
    Ingest {
        /// Raw ratings file; overrides dataset.path
        #[arg(long)]
        input: Option<PathBuf>,
        /// double-colon, csv or tsv; overrides dataset.format
        #[arg(long)]
        format: Option<RatingFormat>,
        #[arg(long)]
        k_core: Option<usize>,
    },
    /// Fit the environment simulator
    TrainSim,
    /// Held-out RMSE of the environment simulator
    EvalSim,
    /// Train the GreedyRM (gamma = 0) and DQNR value models
    TrainAgent,
    /// Run the interactive protocol for each policy
    Evaluate {
        /// Comma-separated subset of random,pop,greedyrm,dqnr
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<PolicyChoice>>,
    },
    /// Greedy vs beam-search relative performance on the simulator
    Validate,
    /// Train and evaluate one value model per discount factor
    SweepGamma,
}

/// Execute a parsed command line, writing human-readable output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut (dyn Write + Send)) -> Result<()> {
    let ctx = Context::load(cli)?;
    let mut exec = || -> Result<()> {
        match &cli.command {
            Command::Ingest { input, format, k_core } => ctx.ingest(input.as_deref(), *format, *k_core, stdout),
            Command::TrainSim => ctx.train_sim(stdout),
            Command::EvalSim => ctx.eval_sim(stdout),
            Command::TrainAgent => ctx.train_agent(stdout),
            Command::Evaluate { policies } => ctx.evaluate(policies.as_deref(), stdout),
            Command::Validate => ctx.validate(stdout),
            Command::SweepGamma => ctx.sweep_gamma(stdout),
        }
    };
    match cli.workers {
        Some(0) => Err(Error::Config("--workers must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(exec),
        None => exec(),
    }
}

//! `hierreg`: fit, check and summarize pooled, hierarchical and clustering
//! Bayesian regressions of grouped data.
//!
//! Exit codes: 0 success, 1 user error, 2 numerical failure.

mod commands;
mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hierreg::draws::Sampler;
use thiserror::Error;

use crate::config::{ConfigFile, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error(transparent)]
    Core(#[from] hierreg::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, e: std::io::Error) -> Self {
        CliError::User(format!("{}: {e}", path.as_ref().display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "hierreg", version, about = "Bayesian regression of grouped data by Gibbs sampling")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler and write draws, summaries and a manifest.
    Fit(FitArgs),
    /// Posterior predictive checks, MSE, DIC and WAIC for fitted runs.
    Check {
        /// Run directories written by `fit`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Seed for the replicated datasets (default: the run's seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the comparison table to this file.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Partition summaries of a clustering run.
    Cluster {
        run: PathBuf,
        /// Relative cost of separating two groups versus joining them.
        #[arg(long, default_value_t = 0.5)]
        cost_ratio: f64,
        /// Output directory (default: RUN/cluster).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset and its true parameters.
    Simulate {
        /// Generator specification (JSON).
        #[arg(long, conflicts_with = "analogue")]
        spec: Option<PathBuf>,
        /// The bundled plant-size analogue (24 farms, 5 rows each).
        #[arg(long)]
        analogue: bool,
        /// Override the generator seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    /// JSON run configuration, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// lrm, lrm-gprior, hlrm or chlrm.
    #[arg(long)]
    model: Option<Sampler>,
    /// Input CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    response: Option<String>,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Grouping column.
    #[arg(long)]
    group: Option<String>,
    /// Do not prepend an intercept column.
    #[arg(long)]
    no_intercept: bool,
    /// Keep only these groups (comma-separated), in this order.
    #[arg(long, value_delimiter = ',')]
    groups: Option<Vec<String>>,
    /// Total sweeps per chain.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Kept draws per chain; sets iterations to burn_in + kept * thin.
    #[arg(long)]
    kept: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Chains, run in parallel with seeds seed, seed+1, ...
    #[arg(long)]
    chains: Option<usize>,
    /// Mixture components for chlrm (default: number of groups).
    #[arg(short = 'K', long = "clusters")]
    k: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl FitArgs {
    fn into_config(self) -> ConfigFile {
        ConfigFile {
            model: self.model,
            data: self.data,
            response: self.response,
            covariates: self.covariates,
            group: self.group,
            intercept: self.no_intercept.then_some(false),
            groups: self.groups,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            kept: self.kept,
            seed: self.seed,
            chains: self.chains,
            k: self.k,
            hyper: None,
            out: self.out,
        }
    }
}

fn fit(args: FitArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    // Explicit flags override file keys; flags that pin the schedule also
    // drop the other file key so the two cannot disagree.
    let mut file = file;
    if args.kept.is_some() {
        file.iterations = None;
    }
    if args.iterations.is_some() {
        file.kept = None;
    }
    let (config, out) = RunConfig::resolve(file.merge(args.into_config()))?;
    run::fit(config, &out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Fit(args) => fit(args),
        Command::Check { runs, seed, compare } => commands::check_runs(&runs, seed, compare.as_deref()),
        Command::Cluster { run, cost_ratio, out } => commands::cluster(&run, cost_ratio, out.as_deref()),
        Command::Simulate {
            spec,
            analogue,
            seed,
            out,
        } => commands::simulate(spec.as_deref(), analogue, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

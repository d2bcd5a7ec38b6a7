//! `bandit-clusters`: run experiments, sweeps and verification suites, and
//! prepare feature files.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 runtime error,
//! 3 a verification check failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bandit_clusters::{PolicyKind, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
    Verify,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Verify => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "bandit-clusters", version, about = "Online clustering of bandits: experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand that reads a run config.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML config, or a JSON file (an aggregate report's embedded config is used).
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set env.dim=5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Start from the large preset (50 of 200 users, 10 clusters, d=50, K=100).
    #[arg(long)]
    paper_scale: bool,
    /// Horizon override.
    #[arg(short = 'T', long = "horizon", value_name = "T")]
    horizon: Option<usize>,
    /// Seed list override, comma separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Exploration-length multiplier override.
    #[arg(long)]
    exploration_scale: Option<f64>,
    /// Policy list override, comma separated.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,
    /// Progress on stderr; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Common {
    /// Resolves the config starting from `base` (or the large preset).
    pub fn load(&self, base: RunConfig) -> Result<RunConfig, Failure> {
        let base = if self.paper_scale { RunConfig::paper_scale() } else { base };
        let mut sets = self.sets.clone();
        if let Some(t) = self.horizon {
            sets.push(format!("T={t}"));
        }
        if let Some(s) = &self.seeds {
            sets.push(format!("seeds={s:?}"));
        }
        if let Some(x) = self.exploration_scale {
            sets.push(format!("params.exploration_scale={x:?}"));
        }
        if let Some(p) = &self.policies {
            let names: Vec<&str> = p.iter().map(|k| k.name()).collect();
            sets.push(format!("policies={names:?}"));
        }
        config::resolve(&base, self.config.as_deref(), &sets)
    }

    pub fn verbose(&self) -> u8 {
        self.verbose
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Arms per round.
    #[value(name = "K")]
    K,
    /// Number of arriving users.
    #[value(name = "u")]
    U,
    /// Perturbation scale of smoothed contexts.
    #[value(name = "sigma")]
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Eigengrowth,
    Coverage,
    Conservation,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every policy on every seed; write traces and aggregates.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(short, long, default_value = "results")]
        out: PathBuf,
    },
    /// Repeat the run grid along one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Axis values, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(short, long, default_value = "results")]
        out: PathBuf,
    },
    /// Empirical checks of the estimator guarantees and of the bookkeeping.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Suites to run (default: all).
        #[arg(long, value_enum, value_delimiter = ',')]
        suite: Vec<Suite>,
    },
    /// Write the configured synthetic environment as an ENVV1 feature file.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Turn a `user item value` feedback log into an ENVV1 feature file.
    SvdPrep {
        /// Feedback log.
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Feature dimension.
        #[arg(short, long, default_value_t = 50)]
        dim: usize,
        /// Values above this become 1, the rest 0.
        #[arg(long, default_value_t = 3.0)]
        threshold: f64,
        /// Keep raw values.
        #[arg(long)]
        no_binarize: bool,
        /// Planted clusters.
        #[arg(long, default_value_t = 10)]
        clusters: usize,
        /// Users kept (default: all).
        #[arg(long)]
        selected: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, out } => commands::run(&common, &out),
        Command::Sweep { common, axis, values, out } => commands::sweep(&common, axis, &values, &out),
        Command::Verify { common, suite } => commands::verify(&common, &suite),
        Command::GenData { common, out } => commands::gen_data(&common, &out),
        Command::SvdPrep { input, out, dim, threshold, no_binarize, clusters, selected, seed } => {
            let threshold = (!no_binarize).then_some(threshold);
            commands::svd_prep(&input, &out, dim, threshold, clusters, selected, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("runtime error: {m}"),
                Failure::Verify => eprintln!("verification failed"),
            }
            ExitCode::from(f.code())
        }
    }
}

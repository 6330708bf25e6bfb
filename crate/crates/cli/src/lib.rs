//! The `admitsim` command-line pipeline: every stage reads and writes files
//! under one output directory and records a manifest of what it did.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::artifacts::Run;
use crate::commands::EconOverrides;
use crate::config::{Precision, RunConfig};
pub use crate::error::{CliError, Result};

pub const DEFAULT_OUTPUT_DIR: &str = "admitsim-run";

#[derive(Debug, Parser)]
#[command(name = "admitsim", version, about = "Synthetic admission experiments from cohort to cost-benefit")]
pub struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Floating-point type of the sequence models.
    #[arg(long, global = true, value_enum)]
    pub precision: Option<Precision>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// More log output; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic cohort.
    Generate,
    /// Fit vocabularies and write token sequences.
    Encode,
    /// Train the configured models.
    Train {
        /// Train only these models (e.g. gbt_academic); repeatable.
        #[arg(long)]
        only: Vec<String>,
    },
    /// Score the test years with every trained model and with GPA.
    Predict,
    /// AUC and rank correlation against GPA.
    Evaluate,
    /// Completion by risk bin and the rejection counterfactual.
    Contract,
    /// ABROCA and the group fairness z-tests.
    AuditFairness {
        /// Comma-separated attributes: native, female, ses.
        #[arg(long)]
        attributes: Option<String>,
    },
    /// Input-times-gradient saliency of a sequence model.
    Explain {
        /// Model name; defaults to the configured family and variant.
        #[arg(long)]
        model: Option<String>,
        /// Number of test sequences to explain.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Two-quota deferred acceptance for one admission year.
    Match {
        /// Matching instance (JSON) instead of the generated cohort.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Admission year to rematch; defaults to the holdout year.
        #[arg(long)]
        year: Option<i32>,
    },
    /// Net government revenue, MVPF and the cost grid.
    Econ {
        /// Yearly revenue.
        #[arg(long)]
        rev: Option<f64>,
        /// One-off cost in year 0.
        #[arg(long)]
        fixed: Option<f64>,
        /// Total yearly variable cost.
        #[arg(long)]
        var: Option<f64>,
        /// Years before revenue starts.
        #[arg(long)]
        delay: Option<u32>,
    },
    /// Collect the result tables into report/.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Encode => "encode",
            Command::Train { .. } => "train",
            Command::Predict => "predict",
            Command::Evaluate => "evaluate",
            Command::Contract => "contract",
            Command::AuditFairness { .. } => "audit-fairness",
            Command::Explain { .. } => "explain",
            Command::Match { .. } => "match",
            Command::Econ { .. } => "econ",
            Command::Report => "report",
        }
    }
}

/// Configuration file plus command-line overrides.
pub fn resolve(cli: &Cli) -> Result<Run> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(p) = cli.precision {
        config.models.precision = p;
    }
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.clone());
    }
    config.validate()?;
    let root = config.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    Ok(Run::new(config, root))
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let run = resolve(&cli)?;
    log::info!("{} in {} (config {})", cli.command.name(), run.root.display(), run.hash);
    match cli.command {
        Command::Generate => commands::generate(&run),
        Command::Encode => commands::encode(&run),
        Command::Train { only } => commands::train(&run, &only),
        Command::Predict => commands::predict(&run),
        Command::Evaluate => commands::evaluate(&run),
        Command::Contract => commands::contract(&run),
        Command::AuditFairness { attributes } => commands::audit_fairness(&run, attributes.as_deref()),
        Command::Explain { model, n } => commands::explain(&run, model.as_deref(), n),
        Command::Match { instance, year } => commands::match_cmd(&run, instance.as_deref(), year),
        Command::Econ { rev, fixed, var, delay } => {
            commands::econ(&run, EconOverrides { revenue: rev, fixed, var, delay })
        }
        Command::Report => commands::report(&run),
    }
}

//! Command-line front end: validation, feature and label export, grid-search
//! tuning and final evaluation with per-ticker reports and a ranking table.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "stockops",
    version,
    about = "Stock backtesting and learning lab"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Input CSV files with daily bars
    #[arg(long, global = true, num_args = 1..)]
    pub input: Vec<PathBuf>,

    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Comma-separated ticker filter
    #[arg(long, global = true, value_delimiter = ',')]
    pub tickers: Vec<String>,

    /// Master seed for every random choice
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML run configuration; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Drop training rows whose label horizon reaches the test day
    #[arg(long, global = true)]
    pub strict_labeling: bool,

    /// Show ranking fractions as percentages
    #[arg(long, global = true)]
    pub percent: bool,

    /// Worker threads
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Trees per forest
    #[arg(long, global = true)]
    pub trees: Option<usize>,

    /// Drop invalid bars with a warning instead of failing
    #[arg(long, global = true)]
    pub permissive: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every input series and write validation findings
    Validate,
    /// Write the 22-indicator feature matrix per ticker
    Features,
    /// Write the labeled dataset per ticker for one parameter triple
    Label {
        #[arg(short = 'g', long)]
        gain: f64,
        #[arg(short = 'l', long)]
        loss: f64,
        #[arg(short = 'd', long)]
        duration: usize,
    },
    /// Grid-search (g, l, d) on the tuning period
    Tune,
    /// Evaluate tuned parameters on the final period and rank tickers
    Evaluate {
        /// Directory with `<ticker>.best.json` files; tunes when absent
        #[arg(long)]
        best: Option<PathBuf>,
    },
}

/// Failure with its exit status: 1 for domain problems, 2 for the
/// environment (I/O, configuration).
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn domain(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn env(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<stockops_core::Error> for CliError {
    fn from(e: stockops_core::Error) -> Self {
        use stockops_core::Error as E;
        match &e {
            E::Io(_) => Self::env(e.to_string()),
            E::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => Self::env(e.to_string()),
            _ => Self::domain(e.to_string()),
        }
    }
}

/// Merges the config file with the flags; flags win.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !common.input.is_empty() {
        cfg.inputs = common.input.clone();
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if !common.tickers.is_empty() {
        cfg.tickers = common.tickers.clone();
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    if let Some(n) = common.trees {
        cfg.forest.n_trees = n;
    }
    cfg.strict_labeling |= common.strict_labeling;
    cfg.percent |= common.percent;
    if common.permissive {
        cfg.parse_mode = stockops_core::ParseMode::Permissive;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.common)?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cfg.threads {
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| CliError::env(format!("thread pool: {e}")))?
    };
    pool.install(|| match &cli.command {
        Command::Validate => commands::validate(&cfg),
        Command::Features => commands::features(&cfg),
        Command::Label {
            gain,
            loss,
            duration,
        } => commands::label(&cfg, *gain, *loss, *duration),
        Command::Tune => commands::tune(&cfg).map(|_| ()),
        Command::Evaluate { best } => commands::evaluate(&cfg, best.as_deref()),
    })
}

/// Runs the parsed command and reports failures on stderr.
pub fn main_with(cli: Cli) -> ExitCode {
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

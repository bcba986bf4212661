//! `cpig`: word lists, trials, item validation and analysis from the shell.
//!
//! Exit codes: 0 ok, 1 usage or configuration error, 2 backend failure,
//! 3 an item failed validation.

mod commands;
mod reference;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpig_core::responsegen::PromptStyle;
use cpig_core::selection::SelectionStrategy;
use tracing_subscriber::EnvFilter;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_BACKEND: u8 = 2;
pub const EXIT_INVALID: u8 = 3;

/// Iterative generator of creative problem-solving test items.
///
/// Backend API keys are read from CPIG_<BACKEND>_API_KEY, never from flags.
#[derive(Debug, Parser)]
#[command(name = "cpig", version, propagate_version = true)]
pub struct Cli {
    /// Log progress at info level (repeat for debug). CPIG_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or check word lists.
    #[command(subcommand)]
    Wordlists(WordlistsCommand),
    /// Run trials, or resume an interrupted one.
    Run(RunArgs),
    /// Check one item against the validity rules and print the report as JSON.
    ValidateItem(ValidateItemArgs),
    /// Compute reports over run directories and optional human ratings.
    Analyze(AnalyzeArgs),
    /// Print the command-line reference as Markdown.
    Reference,
}

#[derive(Debug, Subcommand)]
pub enum WordlistsCommand {
    /// Query a backend for word lists and write them as JSONL.
    Generate(WordlistsGenerateArgs),
    /// Check a word-list JSONL file, reporting every bad line.
    Validate(WordlistsValidateArgs),
}

#[derive(Debug, Args)]
pub struct WordlistsGenerateArgs {
    /// Output JSONL file.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub batches: usize,
    #[arg(long, default_value_t = 10)]
    pub per_batch: usize,
    /// Generator backend id.
    #[arg(long, default_value = "mock")]
    pub backend: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trial config supplying HTTP backend endpoints and templates.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the summary as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct WordlistsValidateArgs {
    pub file: PathBuf,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Random,
    Greedy,
    Constraint,
}

impl From<StrategyArg> for SelectionStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Random => SelectionStrategy::Random,
            StrategyArg::Greedy => SelectionStrategy::Greedy,
            StrategyArg::Constraint => SelectionStrategy::Constraint,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StyleArg {
    Baseline,
    Demographic,
    Psychometric,
}

impl From<StyleArg> for PromptStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Baseline => PromptStyle::Baseline,
            StyleArg::Demographic => PromptStyle::Demographic,
            StyleArg::Psychometric => PromptStyle::Psychometric,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Trial config (JSON). Flags below override its values.
    #[arg(long, conflicts_with = "resume")]
    pub config: Option<PathBuf>,
    /// Resume the run in this directory.
    #[arg(long, value_name = "RUN_DIR")]
    pub resume: Option<PathBuf>,
    /// Run a single seed.
    #[arg(long, conflicts_with_all = ["seeds", "resume"])]
    pub seed: Option<u64>,
    /// Comma-separated seeds, one run directory each.
    #[arg(long, value_delimiter = ',', conflicts_with = "resume")]
    pub seeds: Option<Vec<u64>>,
    /// Use this backend id for generation, responses, scoring and embedding.
    #[arg(long, conflicts_with = "resume")]
    pub backend_all: Option<String>,
    #[arg(long, conflicts_with = "resume")]
    pub name: Option<String>,
    #[arg(long, value_enum, conflicts_with = "resume")]
    pub strategy: Option<StrategyArg>,
    #[arg(long, value_enum, conflicts_with = "resume")]
    pub style: Option<StyleArg>,
    #[arg(long, conflicts_with = "resume")]
    pub iterations: Option<u32>,
    #[arg(long, conflicts_with = "resume")]
    pub k: Option<usize>,
    #[arg(long, conflicts_with = "resume")]
    pub responses_per_item: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, conflicts_with = "resume")]
    pub parallelism: Option<usize>,
    /// Directory that receives `<name>-s<seed>` run directories.
    #[arg(long, default_value = "runs", conflicts_with = "resume")]
    pub out: PathBuf,
    /// Print run summaries as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ValidateItemArgs {
    /// Item text file; reads stdin when absent or `-`.
    pub file: Option<PathBuf>,
    /// Replace the default priming phrases with this file's lines.
    #[arg(long)]
    pub blacklist: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Run directories, or sweep roots containing sweep.json.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Human ratings CSV (item_id,rater_id,complexity,difficulty).
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Also write originality/similarity joint histograms.
    #[arg(long)]
    pub joint_hist: bool,
    /// Drop items whose similarity to another item exceeds this.
    #[arg(long, default_value_t = 0.95, requires = "joint_hist")]
    pub drop_threshold: f64,
    #[arg(long, default_value_t = 20, requires = "joint_hist")]
    pub bins: usize,
    /// Report directory.
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
    /// Print the full report as JSON.
    #[arg(long)]
    pub json: bool,
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_env("CPIG_LOG").unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}

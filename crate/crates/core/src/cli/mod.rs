//! The `xferlens` command line: feature extraction, evaluation, attribution
//! and report rendering.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_evaluate, cmd_explain, cmd_features, cmd_report, RunReport};
pub use config::{ConfigFile, RunConfig, CONFIG_SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_INVALID_METHOD: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    InvalidMethod(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidMethod(_) => EXIT_INVALID_METHOD,
            CliError::Input(_) | CliError::Io { .. } => EXIT_INPUT,
        }
    }
}

/// Error text with its full source chain.
pub(crate) fn chain(e: &dyn std::error::Error) -> String {
    let mut s = e.to_string();
    let mut cur = e.source();
    while let Some(c) = cur {
        let msg = c.to_string();
        if !s.contains(&msg) {
            s.push_str(": ");
            s.push_str(&msg);
        }
        cur = c.source();
    }
    s
}

#[derive(Debug, Parser)]
#[command(name = "xferlens", version, about = "Predict zero-shot cross-lingual transfer performance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the pair feature table from linguistic resources.
    Features(FeaturesArgs),
    /// Evaluate models under LOLO/LLRO and write reports.
    Evaluate(RunArgs),
    /// Write per-task feature attributions.
    Explain(ExplainArgs),
    /// Re-render tables and figure data from report JSON files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Directory of `<lang>.txt` subword vocabularies.
    #[arg(long)]
    pub vocab_dir: Option<PathBuf>,
    /// `lang,kind,d0,...` typology vectors.
    #[arg(long)]
    pub typology: Option<PathBuf>,
    /// `lang,feature_value` WALS table; missing means no wmrr column.
    #[arg(long)]
    pub wals: Option<PathBuf>,
    /// `lang,class,pretrain_words` language metadata.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// `lang,word_count,subword_count,continued_word_count` tokenizer counts.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Restrict pivots to these languages (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub pivots: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Model specs such as `awt,lasso:lambda=0.05,group-lasso`.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// `lolo`, `llro`, or both.
    #[arg(long, value_delimiter = ',')]
    pub protocol: Vec<String>,
    /// Evaluation task; repeatable. Defaults to every task.
    #[arg(long)]
    pub task: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also emit MAE against the number of helper tasks.
    #[arg(long)]
    pub helper_sweep: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `linear-shap` or `permutation`.
    #[arg(long, default_value = "linear-shap")]
    pub method: String,
    /// Permutation repeats.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files written by `evaluate`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Directory for `table.txt` and `fig1.csv`; prints only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Features(a) => cmd_features(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::Report(a) => cmd_report(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            e.exit_code()
        }
    }
}

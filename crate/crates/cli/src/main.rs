mod commands;
mod config;
mod error;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "easytool", version, about = "Concise tool instructions for LLM agents")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Normalize raw tool documentation into the canonical JSONL corpus.
    Ingest(IngestArgs),
    /// Generate tool instructions from a documentation corpus.
    Refine(RefineArgs),
    /// Check instruction guidelines against their documentation.
    Validate(ValidateArgs),
    /// Token statistics of a corpus, or its reduction against another.
    Stats(StatsArgs),
    /// Build, query or evaluate a retrieval index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Run the agent on one or more requests and write traces.
    Run(RunArgs),
    /// Score traces.
    Eval(EvalArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum FormatArg {
    Rapidapi,
    Rest,
    Bare,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip detection and parse as this format.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Emit one tool per function.
    #[arg(long)]
    pub per_function: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecuteArg {
    None,
    Arithmetic,
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `scripted:<rules.json>` or `network`.
    #[arg(long)]
    pub provider: Option<String>,
    /// Execute generated examples with a local executor.
    #[arg(long, value_enum, default_value = "none")]
    pub execute: ExecuteArg,
    #[arg(long)]
    pub prompt_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long)]
    pub instructions: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    pub execute: ExecuteArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `fallback` or `cl100k`.
    #[arg(long)]
    pub tokenizer: Option<String>,
    /// Stats file of the documentation corpus; emits a reduction record.
    #[arg(long)]
    pub against: Option<PathBuf>,
    #[arg(long, default_value = "corpus")]
    pub dataset: String,
}

#[derive(Subcommand, Debug)]
pub enum IndexCommand {
    Build {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    Eval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModeArg {
    Raw,
    Easytool,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Request text, or a file with one request per line or gold JSONL.
    #[arg(long)]
    pub request: String,
    #[arg(long)]
    pub trace_out: PathBuf,
    #[arg(long)]
    pub provider: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Comma-separated: pass, success, win, cp, acc, err.
    #[arg(long, default_value = "pass,err")]
    pub metrics: String,
    /// `scripted:<rules.json>` or `network`; needed for success and win.
    #[arg(long)]
    pub judge: Option<String>,
    /// Traces of the system compared against, for win rate.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Also report the share of tasks with a tool-related error.
    #[arg(long)]
    pub per_task: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.record());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.record());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

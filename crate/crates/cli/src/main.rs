//! `hdl-explain`: explain FPGA synthesis errors, and run the explanation experiment.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdl_explain::{Grouping, Strategy, Tool};

/// Exit codes, stable for scripting.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const NO_LOG: u8 = 2;
    pub const NO_ERRORS: u8 = 3;
    pub const SOURCE_UNREADABLE: u8 = 4;
    pub const BACKEND: u8 = 5;
}

#[derive(Debug, Parser)]
#[command(
    name = "hdl-explain",
    version,
    about = "Explain Quartus and Vivado synthesis errors to novice HDL designers"
)]
struct Cli {
    /// Config file (default: ./hdl-explain.toml, then the user config directory).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Explain the first error of a synthesis run.
    Explain(ExplainArgs),
    /// List every error extracted from a project's synthesis log.
    Harvest(HarvestArgs),
    /// Print the experiment job breakdown.
    Plan(PlanArgs),
    /// Generate every planned response into a store, skipping ones already there.
    Run(RunArgs),
    /// Grade stored responses interactively.
    Grade(GradeArgs),
    /// Aggregate grades into a report.
    Report(ReportArgs),
    /// Check that every corpus log yields its expected error.
    CorpusValidate(CorpusArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ToolArg {
    Vivado,
    Quartus,
}

impl From<ToolArg> for Tool {
    fn from(t: ToolArg) -> Self {
        match t {
            ToolArg::Vivado => Tool::Vivado,
            ToolArg::Quartus => Tool::Quartus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Ec,
    Ecl,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Ec => Strategy::ErrorCode,
            StrategyArg::Ecl => Strategy::ErrorCodeLine,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
enum ListFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
enum TableFormat {
    #[default]
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    /// Synthesis tool that produced the log.
    #[arg(long, value_enum)]
    tool: ToolArg,
    /// Project directory to search for the log.
    #[arg(long, default_value = ".")]
    project: PathBuf,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    project: ProjectArgs,
    /// Prompt strategy (default from config: ecl).
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Model name (default: first model in the config plan).
    #[arg(long)]
    model: Option<String>,
    /// Which error of the log to explain, counting from 0.
    #[arg(long, default_value_t = 0)]
    error_index: usize,
    /// Also print this many source lines around the reported line.
    #[arg(long, value_name = "LINES")]
    context: Option<u32>,
    /// Use the offline mock backend.
    #[arg(long)]
    mock: bool,
}

#[derive(Debug, Args)]
struct HarvestArgs {
    #[command(flatten)]
    project: ProjectArgs,
    #[arg(long, value_enum, default_value_t)]
    format: ListFormat,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Corpus directory containing manifest.toml.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t)]
    format: ListFormat,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Response store (JSON lines, appended to).
    #[arg(long, default_value = "results/responses.jsonl")]
    store: PathBuf,
    /// Use the offline mock backend.
    #[arg(long)]
    mock: bool,
    /// Simulated per-response latency for the mock, in milliseconds.
    #[arg(long, value_name = "MS", requires = "mock")]
    mock_latency_ms: Option<u64>,
    /// Run jobs one at a time.
    #[arg(long)]
    sequential: bool,
    /// Concurrent requests (default from config).
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// Keep the full prompt text in each record.
    #[arg(long)]
    store_prompts: bool,
}

#[derive(Debug, Args)]
struct GradeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "results/responses.jsonl")]
    store: PathBuf,
    #[arg(long, default_value = "results/grades.jsonl")]
    grades: PathBuf,
    /// Grader identity (default: $USER).
    #[arg(long)]
    grader: Option<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "results/responses.jsonl")]
    store: PathBuf,
    #[arg(long, default_value = "results/grades.jsonl")]
    grades: PathBuf,
    /// total, tool, language, strategy, model_all, model_pass1 or per_bug.
    #[arg(long, default_value = "total")]
    grouping: Grouping,
    #[arg(long, value_enum, default_value_t)]
    format: TableFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::Config::discover(cli.config.as_deref())
        .map_err(commands::Failure::from)
        .and_then(|config| commands::dispatch(cli.command, &config));
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

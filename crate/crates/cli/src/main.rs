//! `odac`: batch front end for the counting-question pipeline.
//!
//! Every subcommand is a thin adapter over the library: read inputs,
//! resolve configuration (flags over `--config` file over defaults), call
//! one pipeline stage, write the data atomically with a run manifest
//! beside it. Logs go to stderr; data goes to `--out` (`-` for stdout).

mod commands;
mod config;
mod runio;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use odac_core::dataset_gen::Ratio;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

/// Errors split by exit code: bad input or configuration is 1, a failure
/// while running the pipeline is 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Pipeline(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

/// Minimal leveled logger writing to stderr.
#[derive(Debug, Clone, Copy)]
pub struct Log {
    level: LogLevel,
}

impl Log {
    pub fn new(level: LogLevel) -> Log {
        Log { level }
    }

    fn say(&self, at: LogLevel, tag: &str, msg: fmt::Arguments<'_>) {
        if at <= self.level {
            eprintln!("{tag}: {msg}");
        }
    }

    pub fn error(&self, msg: fmt::Arguments<'_>) {
        self.say(LogLevel::Error, "error", msg);
    }

    pub fn warn(&self, msg: fmt::Arguments<'_>) {
        self.say(LogLevel::Warn, "warn", msg);
    }

    pub fn info(&self, msg: fmt::Arguments<'_>) {
        self.say(LogLevel::Info, "info", msg);
    }

    pub fn debug(&self, msg: fmt::Arguments<'_>) {
        self.say(LogLevel::Debug, "debug", msg);
    }
}

#[derive(Debug, Parser)]
#[command(name = "odac", version, about = "Counting-question pipeline tools")]
struct Cli {
    /// JSON file with defaults for any flag; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Verbosity of the stderr log (default info).
    #[arg(long, global = true, value_enum)]
    log_level: Option<LogLevel>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a COCO annotation file and re-serialize it normalized.
    Ingest(IngestArgs),
    /// Filter detections and count them into per-image pseudo labels.
    PseudoLabels(PseudoLabelsArgs),
    /// Generate a labeled question dataset from annotations.
    GenDataset(GenDatasetArgs),
    /// Inject reference counts into a test question file.
    Augment(AugmentArgs),
    /// Answer a record file with a responder and score the replies.
    Eval(EvalArgs),
    /// Run the 2x2 assistance/restructuring matrix and report deltas.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// COCO annotation JSON.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Optional detection JSON to validate against the same categories.
    #[arg(long, value_name = "FILE")]
    detections: Option<PathBuf>,
    /// Output path, or `-` for stdout.
    #[arg(long, value_name = "FILE|-")]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct PseudoLabelsArgs {
    /// COCO annotation JSON (supplies the category vocabulary).
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Detection JSON to filter and count.
    #[arg(long, value_name = "FILE")]
    detections: Option<PathBuf>,
    /// Minimum detection confidence kept (default 0.85).
    #[arg(long, value_name = "T")]
    confidence: Option<f64>,
    /// Minimum symmetric box aspect ratio kept (default 0.05).
    #[arg(long, value_name = "R")]
    aspect_ratio: Option<f64>,
    /// Output path, or `-` for stdout.
    #[arg(long, value_name = "FILE|-")]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct GenDatasetArgs {
    /// COCO annotation JSON providing ground-truth counts.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Number of digit questions to generate (default 100).
    #[arg(long, value_name = "N")]
    digit: Option<u32>,
    /// Yes/no-to-digit ratio, written A:B (default 1:100).
    #[arg(long, value_name = "A:B")]
    ratio: Option<Ratio>,
    /// Generation seed (default 0).
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Largest counterfactual delta (default 5).
    #[arg(long, value_name = "D")]
    delta_max: Option<u32>,
    /// Fraction of digit questions made counterfactual (default 0.5).
    #[arg(long, value_name = "F")]
    counterfactual_fraction: Option<f64>,
    /// Fraction of digit questions aimed at absent objects (default 0.1).
    #[arg(long, value_name = "F")]
    zero_fraction: Option<f64>,
    /// Output path, or `-` for stdout.
    #[arg(long, value_name = "FILE|-")]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// Test questions, one JSON object per line.
    #[arg(long, value_name = "FILE")]
    questions: Option<PathBuf>,
    /// COCO annotation JSON (supplies the category vocabulary).
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Pseudo-label JSON produced by `pseudo-labels`.
    #[arg(long, value_name = "FILE", conflicts_with = "detections")]
    labels: Option<PathBuf>,
    /// Detection JSON to filter and count in place of `--labels`.
    #[arg(long, value_name = "FILE")]
    detections: Option<PathBuf>,
    /// Minimum detection confidence kept (default 0.85).
    #[arg(long, value_name = "T")]
    confidence: Option<f64>,
    /// Minimum symmetric box aspect ratio kept (default 0.05).
    #[arg(long, value_name = "R")]
    aspect_ratio: Option<f64>,
    /// Output path, or `-` for stdout.
    #[arg(long, value_name = "FILE|-")]
    out: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResponderKind {
    /// Deterministic oracle that follows injected references.
    OracleReference,
    /// Seeded baseline that guesses without reading the prompt.
    OracleBlind,
    /// HTTP endpoint speaking the prompt/text JSON contract.
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Prompt records, one JSON object per line.
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,
    /// Which responder answers the prompts.
    #[arg(long, value_enum)]
    responder: Option<ResponderKind>,
    /// COCO annotation JSON (required by oracle-reference).
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Pseudo-label JSON for oracle-reference.
    #[arg(long, value_name = "FILE", conflicts_with = "detections")]
    labels: Option<PathBuf>,
    /// Detection JSON for oracle-reference in place of `--labels`.
    #[arg(long, value_name = "FILE")]
    detections: Option<PathBuf>,
    /// Minimum detection confidence kept (default 0.85).
    #[arg(long, value_name = "T")]
    confidence: Option<f64>,
    /// Minimum symmetric box aspect ratio kept (default 0.05).
    #[arg(long, value_name = "R")]
    aspect_ratio: Option<f64>,
    /// Seed for oracle-blind (default 0).
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Remote endpoint URL; falls back to ODAC_ENDPOINT.
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    /// Remote request timeout in seconds (default 30).
    #[arg(long, value_name = "SECS")]
    timeout_secs: Option<u64>,
    /// Remote retries after the first attempt (default 2).
    #[arg(long, value_name = "N")]
    retry_budget: Option<u32>,
    /// Concurrent requests (default 1).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Report as machine JSON or an aligned table (default json).
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Output path, or `-` for stdout.
    #[arg(long, value_name = "FILE|-")]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// COCO annotation JSON providing ground-truth counts.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Detection JSON assisting the on-cells.
    #[arg(long, value_name = "FILE")]
    detections: Option<PathBuf>,
    /// Number of digit questions to generate (default 100).
    #[arg(long, value_name = "N")]
    digit: Option<u32>,
    /// Yes/no-to-digit ratio, written A:B (default 1:100).
    #[arg(long, value_name = "A:B")]
    ratio: Option<Ratio>,
    /// Generation and blind-baseline seed (default 0).
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Largest counterfactual delta (default 5).
    #[arg(long, value_name = "D")]
    delta_max: Option<u32>,
    /// Fraction of digit questions made counterfactual (default 0.5).
    #[arg(long, value_name = "F")]
    counterfactual_fraction: Option<f64>,
    /// Fraction of digit questions aimed at absent objects (default 0.1).
    #[arg(long, value_name = "F")]
    zero_fraction: Option<f64>,
    /// Minimum detection confidence kept (default 0.85).
    #[arg(long, value_name = "T")]
    confidence: Option<f64>,
    /// Minimum symmetric box aspect ratio kept (default 0.05).
    #[arg(long, value_name = "R")]
    aspect_ratio: Option<f64>,
    /// Report as machine JSON or an aligned table (default json).
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Output path, or `-` for stdout.
    #[arg(long, value_name = "FILE|-")]
    out: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let boot_log = Log::new(LogLevel::Info);
    let file = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(file) => file,
        Err(err) => {
            boot_log.error(format_args!("{err}"));
            return ExitCode::from(err.exit_code());
        }
    };
    let level = match (cli.log_level, &file.log_level) {
        (Some(level), _) => level,
        (None, Some(value)) => match config::parse_enum::<LogLevel>(value, "log_level") {
            Ok(level) => level,
            Err(err) => {
                boot_log.error(format_args!("{err}"));
                return ExitCode::from(err.exit_code());
            }
        },
        (None, None) => LogLevel::Info,
    };
    let log = Log::new(level);

    let outcome = match cli.command {
        Command::Ingest(args) => commands::ingest(args, &file, &log),
        Command::PseudoLabels(args) => commands::pseudo_labels(args, &file, &log),
        Command::GenDataset(args) => commands::gen_dataset(args, &file, &log),
        Command::Augment(args) => commands::augment(args, &file, &log),
        Command::Eval(args) => commands::eval(args, &file, &log),
        Command::Ablate(args) => commands::ablate(args, &file, &log),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log.error(format_args!("{err}"));
            ExitCode::from(err.exit_code())
        }
    }
}

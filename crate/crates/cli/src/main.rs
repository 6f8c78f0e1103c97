//! `ris`: the reasoning-integrity pipeline from generation to serving.
//!
//! Exit codes: 0 on success, 1 on a domain error (bad data, failed requests),
//! 2 on a usage error.

mod commands;
mod config;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ris_core::Condition;

#[derive(Parser)]
#[command(name = "ris", version, about = "Audit reasoning traces for right-for-wrong-reasons answers")]
struct Cli {
    /// TOML run configuration (every section optional).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for splits and training; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// RIS threshold for judge/stats/report, decision threshold for predict.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate traces for every model × condition × record.
    Generate(GenerateArgs),
    /// Score every step of every trace with the judge panel.
    Judge(JudgeArgs),
    /// Label flawed steps with error categories and RAG steps with context misuse.
    Classify(JudgeArgs),
    /// Dump 391-value feature rows with flawed labels.
    Features(FeaturesArgs),
    /// Train the distilled verifier on a feature dump.
    Train(TrainArgs),
    /// Evaluate a verifier on a feature dump.
    Eval(EvalArgs),
    /// Predict flawed-trace probabilities for traces.
    Predict(PredictArgs),
    /// Print the statistics tables; optionally write the RWR table as CSV.
    Stats(StatsArgs),
    /// Write CSV tables and the effect-size chart into a directory.
    Report(ReportArgs),
    /// Serve the verifier over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Task records (JSONL).
    #[arg(long = "in", alias = "records", value_name = "FILE")]
    input: PathBuf,
    /// Generated traces (JSONL).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Generator model; repeat for several. Defaults to the config's list.
    #[arg(long = "generator", value_name = "MODEL")]
    generators: Vec<String>,
    /// Condition to run; repeat for several. Defaults to all four.
    #[arg(long = "condition", value_name = "NAME")]
    conditions: Vec<Condition>,
    /// Chat-completion base URL (else config, else RIS_API_BASE).
    #[arg(long)]
    base: Option<String>,
    /// Sampling temperature; overrides the config.
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct JudgeArgs {
    /// Traces (judge) or scored traces (classify), JSONL.
    #[arg(long = "in", visible_aliases = ["trace", "scored"], value_name = "FILE")]
    input: PathBuf,
    /// Task records the traces were generated from.
    #[arg(long, value_name = "FILE")]
    records: PathBuf,
    /// Scored (judge) or classified (classify) traces, JSONL.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Verdict cache file (append-only JSONL).
    #[arg(long, value_name = "FILE")]
    cache: Option<PathBuf>,
    /// Judge base URL for judges without their own.
    #[arg(long)]
    base: Option<String>,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Scored traces (JSONL).
    #[arg(long = "in", visible_alias = "scored", value_name = "FILE")]
    input: PathBuf,
    /// Feature rows (JSONL).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Embedding provider base URL; the hashing embedder is used otherwise.
    #[arg(long)]
    embed_base: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature dump (JSONL).
    #[arg(long = "in", visible_alias = "features", value_name = "FILE")]
    input: PathBuf,
    /// Model file to write.
    #[arg(long, visible_alias = "model", value_name = "FILE")]
    out: PathBuf,
    /// Share of each class held out for testing.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Where to write the held-out rows (default: `<out>.test.jsonl`).
    #[arg(long, value_name = "FILE")]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Verifier model file.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Feature dump (JSONL).
    #[arg(long = "in", visible_alias = "features", value_name = "FILE")]
    input: PathBuf,
    /// Also write the report as JSON here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Verifier model file.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Traces (JSONL).
    #[arg(long = "in", visible_alias = "trace", value_name = "FILE")]
    input: PathBuf,
    /// Output JSONL (default: stdout).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Embedding provider base URL; the hashing embedder is used otherwise.
    #[arg(long)]
    embed_base: Option<String>,
}

#[derive(Args)]
struct StatsArgs {
    /// Scored traces (JSONL).
    #[arg(long = "in", visible_alias = "scored", value_name = "FILE")]
    input: PathBuf,
    /// RWR table CSV.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Scored traces (JSONL).
    #[arg(long = "in", visible_alias = "scored", value_name = "FILE")]
    input: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Verifier model file.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Listen address (default from config, 127.0.0.1:8080).
    #[arg(long)]
    addr: Option<String>,
    /// Embedding provider base URL; the hashing embedder is used otherwise.
    #[arg(long)]
    embed_base: Option<String>,
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("RIS_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).with_target(false).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    init_tracing();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: starting runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(commands::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

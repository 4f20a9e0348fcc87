//! `judgeboard`: batch pipeline, simulator and server launcher.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use judgeboard_core::aggregate::BoardFormat;

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "judgeboard",
    version,
    about = "Pairwise judgment rating and leaderboards"
)]
struct Cli {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `rng_seed` (scheduler presentation order, simulator noise).
    #[arg(long, global = true)]
    rng_seed: Option<u64>,
    /// Fail on the first schema error instead of skipping the line.
    #[arg(long, global = true)]
    strict: bool,
    /// TrueSkill override, `key=value`; repeatable or comma separated.
    #[arg(long = "params", global = true, value_delimiter = ',')]
    params: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a judgment log and write it back in canonical form.
    Ingest(IngestArgs),
    /// Apply qualification and quality rules and report statistics.
    Filter(FilterArgs),
    /// Rate a filtered judgment log into per-task ratings.
    Rate(RateArgs),
    /// Normalize per-task ratings and aggregate them.
    Normalize(NormalizeArgs),
    /// Render a leaderboard.
    Board(BoardArgs),
    /// Generate judgments from agents with known skills.
    Simulate(SimulateArgs),
    /// Pick the next comparison offline from a log.
    NextPair(NextPairArgs),
    /// Run the judging service.
    Serve(ServeArgs),
    /// Filter, rate, normalize and render in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    log: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write rejected lines as JSONL.
    #[arg(long)]
    rejections: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    log: PathBuf,
    /// Worker profiles JSONL. Without it qualification is not checked.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Kept records.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Removed records with their reason, for review.
    #[arg(long)]
    removed: Option<PathBuf>,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RateArgs {
    log: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NormalizeArgs {
    /// Task board JSON from `rate`, or with --scores a per-task score CSV.
    input: PathBuf,
    /// Treat the input as already normalized per-task scores (CSV).
    #[arg(long)]
    scores: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoardArgs {
    /// Normalized leaderboard JSON, or a per-task score CSV.
    input: PathBuf,
    #[arg(long, default_value = "csv")]
    format: BoardFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write qualified profiles for the simulated workers.
    #[arg(long)]
    profiles_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NextPairArgs {
    log: PathBuf,
    #[arg(long)]
    task: String,
    #[arg(long)]
    worker: String,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Directory holding the event log and snapshots.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: std::net::SocketAddr,
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    log: PathBuf,
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    for p in &cli.params {
        config.set_param(p).map_err(commands::usage)?;
    }
    if cli.rng_seed.is_some() {
        config.rng_seed = cli.rng_seed;
    }
    let ctx = commands::Context {
        config,
        strict: cli.strict,
    };
    match cli.command {
        Command::Ingest(a) => {
            commands::ingest(&ctx, &a.log, a.out.as_deref(), a.rejections.as_deref())
        }
        Command::Filter(a) => commands::filter(
            &ctx,
            &a.log,
            a.profiles.as_deref(),
            a.out.as_deref(),
            a.removed.as_deref(),
            a.report.as_deref(),
        ),
        Command::Rate(a) => commands::rate(&ctx, &a.log, a.out.as_deref()),
        Command::Normalize(a) => commands::normalize(&ctx, &a.input, a.scores, a.out.as_deref()),
        Command::Board(a) => commands::board(&ctx, &a.input, a.format, a.out.as_deref()),
        Command::Simulate(a) => {
            commands::simulate(&ctx, a.out.as_deref(), a.profiles_out.as_deref())
        }
        Command::NextPair(a) => commands::next_pair(&ctx, &a.log, &a.task, &a.worker),
        Command::Serve(a) => commands::serve(&ctx, &a.data, a.addr, a.profiles.as_deref()),
        Command::Pipeline(a) => commands::pipeline(&ctx, &a.log, a.profiles.as_deref(), &a.out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

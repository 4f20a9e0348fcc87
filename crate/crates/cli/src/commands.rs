use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context as _, Result};
use judgeboard_core::aggregate::{
    aggregate, columns_from_board, normalize_task, parse_task_columns, render_board,
    AggregateOptions, BoardFormat, NormalizedLeaderboard, TaskScoreColumn,
};
use judgeboard_core::ingest::{
    draw_stats, filter_quality, read_judgments, read_profiles, FilterReport, Ingested,
    WorkerRegistry,
};
use judgeboard_core::rating::{rate_log, RatingConfig};
use judgeboard_core::schedule::{
    next_pair as schedule_next, ComparisonHistory, Pair, PairRequest, SeedSet,
};
use judgeboard_core::sim::{self, simulate as run_simulation};
use judgeboard_core::{Error as CoreError, JudgmentRecord, TaskBoard};
use judgeboard_service::Engine;
use serde::Serialize;
use serde_json::json;

use crate::config::FileConfig;

pub struct Context {
    pub config: FileConfig,
    pub strict: bool,
}

#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug)]
struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(format!("{e:#}")))
}

fn input(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(InputError(msg.into()))
}

/// 1 usage, 2 input, 3 internal.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    let mut code = 3;
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        let is_input = cause.is::<InputError>()
            || cause.is::<io::Error>()
            || cause.is::<serde_json::Error>()
            || cause.is::<toml::de::Error>()
            || cause.downcast_ref::<CoreError>().is_some_and(|c| {
                matches!(
                    c,
                    CoreError::InvalidArgument(_)
                        | CoreError::Parse(_)
                        | CoreError::MissingAgent { .. }
                        | CoreError::InsufficientData(_)
                        | CoreError::InsufficientAgents(_)
                )
            });
        if is_input {
            code = 2;
        }
    }
    code
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn read_log(ctx: &Context, path: &Path) -> Result<Ingested> {
    let ingested =
        read_judgments(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    for r in &ingested.rejections {
        eprintln!("{}: {r}", path.display());
    }
    if ctx.strict && !ingested.rejections.is_empty() {
        return Err(input(format!(
            "{} schema error(s) in {} (strict mode)",
            ingested.rejections.len(),
            path.display()
        )));
    }
    Ok(ingested)
}

fn read_registry(path: Option<&Path>) -> Result<Option<WorkerRegistry>> {
    match path {
        Some(p) => {
            Ok(Some(read_profiles(open(p)?).with_context(|| {
                format!("reading profiles {}", p.display())
            })?))
        }
        None => {
            eprintln!("warning: no worker profiles given, qualification is not checked");
            Ok(None)
        }
    }
}

fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, content).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(content.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs always serialize");
    s.push('\n');
    s
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| serde_json::to_string(&x).expect("outputs always serialize") + "\n")
        .collect()
}

fn sorted(mut records: Vec<JudgmentRecord>) -> Vec<JudgmentRecord> {
    records.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    records
}

pub fn ingest(
    ctx: &Context,
    log: &Path,
    out: Option<&Path>,
    rejections: Option<&Path>,
) -> Result<()> {
    let ingested = read_log(ctx, log)?;
    if let Some(p) = rejections {
        emit(Some(p), &jsonl(&ingested.rejections))?;
    }
    eprintln!(
        "{} valid record(s), {} rejected",
        ingested.records.len(),
        ingested.rejections.len()
    );
    emit(out, &jsonl(sorted(ingested.records)))
}

struct Filtered {
    report: FilterReport,
    kept: Vec<JudgmentRecord>,
    removed: String,
}

fn run_filter(
    ctx: &Context,
    records: &[JudgmentRecord],
    profiles: Option<&WorkerRegistry>,
) -> Filtered {
    let outcome = filter_quality(records, profiles, ctx.config.filter());
    let report = FilterReport::from_outcome(&outcome);
    let removed = jsonl(
        outcome
            .removed
            .iter()
            .map(|(r, reason)| json!({ "reason": reason.code(), "record": r })),
    );
    Filtered {
        report,
        kept: outcome.valid,
        removed,
    }
}

pub fn filter(
    ctx: &Context,
    log: &Path,
    profiles: Option<&Path>,
    out: Option<&Path>,
    removed: Option<&Path>,
    report: Option<&Path>,
) -> Result<()> {
    let ingested = read_log(ctx, log)?;
    let registry = read_registry(profiles)?;
    let f = run_filter(ctx, &ingested.records, registry.as_ref());
    if let Some(p) = out {
        emit(Some(p), &jsonl(&f.kept))?;
    }
    if let Some(p) = removed {
        emit(Some(p), &f.removed)?;
    }
    eprintln!(
        "{} kept, {} removed of {}",
        f.report.valid, f.report.removed, f.report.total
    );
    emit(report, &to_json(&f.report))
}

/// Rating config, with per-task draw probabilities taken from the data in calibration mode.
fn rating_config(ctx: &Context, records: &[JudgmentRecord]) -> Result<RatingConfig> {
    let mut config = ctx.config.rating()?;
    if ctx.config.calibrate() {
        for (task, stat) in draw_stats(records) {
            let p = (stat.draws as f64 / stat.total as f64).min(0.99);
            config.draw_probability_by_task.insert(task, p);
        }
        config.validate()?;
    }
    Ok(config)
}

pub fn rate(ctx: &Context, log: &Path, out: Option<&Path>) -> Result<()> {
    let records = sorted(read_log(ctx, log)?.records);
    let config = rating_config(ctx, &records)?;
    let board = rate_log(&records, &config)?;
    emit(out, &to_json(&board))
}

fn leaderboard(ctx: &Context, board: &TaskBoard) -> Result<NormalizedLeaderboard> {
    let tasks: Vec<String> = match &ctx.config.tasks {
        Some(t) => t.clone(),
        None => board.tasks().map(|(t, _)| t.to_owned()).collect(),
    };
    let roster: BTreeSet<String> = match &ctx.config.agents {
        Some(a) => a.iter().cloned().collect(),
        None => board.tasks().flat_map(|(_, m)| m.keys().cloned()).collect(),
    };
    let (columns, uncertainty) = columns_from_board(board, &tasks, &roster);
    let normalized = columns
        .iter()
        .map(|c| {
            Ok(TaskScoreColumn::new(
                c.task.clone(),
                normalize_task(c, ctx.config.stddev_convention())?,
            ))
        })
        .collect::<Result<Vec<_>, CoreError>>()?;
    Ok(aggregate(
        &normalized,
        &AggregateOptions {
            missing: ctx.config.missing_agent(),
            uncertainty,
        },
    )?)
}

fn from_scores(ctx: &Context, path: &Path) -> Result<NormalizedLeaderboard> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let columns = parse_task_columns(&text)?;
    Ok(aggregate(
        &columns,
        &AggregateOptions {
            missing: ctx.config.missing_agent(),
            uncertainty: BTreeMap::new(),
        },
    )?)
}

pub fn normalize(ctx: &Context, input_path: &Path, scores: bool, out: Option<&Path>) -> Result<()> {
    let lb = if scores {
        from_scores(ctx, input_path)?
    } else {
        let text = fs::read_to_string(input_path)
            .with_context(|| format!("cannot read {}", input_path.display()))?;
        let board: TaskBoard = serde_json::from_str(&text)
            .with_context(|| format!("{} is not a task board", input_path.display()))?;
        leaderboard(ctx, &board)?
    };
    emit(out, &to_json(&lb))
}

pub fn board(
    ctx: &Context,
    input_path: &Path,
    format: BoardFormat,
    out: Option<&Path>,
) -> Result<()> {
    let is_csv = input_path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let lb = if is_csv {
        from_scores(ctx, input_path)?
    } else {
        let text = fs::read_to_string(input_path)
            .with_context(|| format!("cannot read {}", input_path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("{} is not a normalized leaderboard", input_path.display()))?
    };
    emit(out, &render_board(&lb, format)?)
}

pub fn simulate(ctx: &Context, out: Option<&Path>, profiles_out: Option<&Path>) -> Result<()> {
    let config = ctx.config.sim(ctx.config.rng_seed())?;
    let records = run_simulation(&config)?;
    if let Some(p) = profiles_out {
        emit(Some(p), &jsonl(sim::worker_profiles(&config)))?;
    }
    emit(out, &jsonl(&records))
}

pub fn next_pair(ctx: &Context, log: &Path, task: &str, worker: &str) -> Result<()> {
    let records: Vec<JudgmentRecord> = sorted(read_log(ctx, log)?.records);
    let in_task: Vec<&JudgmentRecord> = records.iter().filter(|r| r.task == task).collect();
    let agents: BTreeSet<String> = match &ctx.config.agents {
        Some(a) => a.iter().cloned().collect(),
        None => in_task
            .iter()
            .flat_map(|r| [r.agent_a.clone(), r.agent_b.clone()])
            .collect(),
    };
    let seeds = match (&ctx.config.seeds, ctx.config.seeds_per_task) {
        (None, None) if !in_task.is_empty() => {
            let seen: BTreeSet<String> = in_task.iter().map(|r| r.seed.clone()).collect();
            seen.into_iter().collect()
        }
        _ => ctx.config.seeds(),
    };
    let seeds = SeedSet::new(task, seeds)?;

    let config = rating_config(ctx, &records)?;
    let board = rate_log(&records, &config)?;
    let mut history = ComparisonHistory::new();
    let mut exclude = BTreeSet::new();
    for r in &in_task {
        let pair = Pair::new(&r.agent_a, &r.agent_b)?;
        history.record(task, &pair, &r.seed);
        if r.worker_id == worker {
            exclude.insert((pair, r.seed.clone()));
        }
    }
    let params = config.params_for(task);
    let req = PairRequest {
        agents: &agents,
        board: &board,
        params: &params,
        history: &history,
        seeds: &seeds,
        strategy: ctx.config.strategy.unwrap_or_default(),
        rng_seed: ctx.config.rng_seed(),
        cap: ctx
            .config
            .pair_cap
            .unwrap_or(judgeboard_core::schedule::DEFAULT_PAIR_CAP),
        exclude: Some(&exclude),
    };
    let value = match schedule_next(&req) {
        Ok(a) => json!({
            "status": "assigned",
            "task": a.task,
            "seed": a.seed,
            "agent_a": a.left,
            "agent_b": a.right,
        }),
        Err(CoreError::Saturated { .. } | CoreError::NoWork { .. }) => {
            json!({ "status": "no-work", "task": task })
        }
        Err(e) => return Err(e.into()),
    };
    emit(None, &to_json(&value))
}

pub fn serve(ctx: &Context, data: &Path, addr: SocketAddr, profiles: Option<&Path>) -> Result<()> {
    let config = ctx.config.service()?;
    let registry = read_registry(profiles)?;
    let engine = Engine::open(data, config, registry)
        .map_err(|e| input(format!("opening {}: {e}", data.display())))?;
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime
        .block_on(async move {
            let shutdown = async {
                let _ = tokio::signal::ctrl_c().await;
            };
            judgeboard_service::http::serve(
                Arc::new(engine),
                addr,
                |bound| {
                    println!("listening on {bound}");
                    let _ = io::stdout().flush();
                },
                shutdown,
            )
            .await
        })
        .with_context(|| format!("serving on {addr}"))?;
    Ok(())
}

pub fn pipeline(ctx: &Context, log: &Path, profiles: Option<&Path>, out_dir: &Path) -> Result<()> {
    let ingested = read_log(ctx, log)?;
    let registry = read_registry(profiles)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = |name: &str| out_dir.join(name);

    emit(
        Some(&path("rejections.jsonl")),
        &jsonl(&ingested.rejections),
    )?;
    let f = run_filter(ctx, &ingested.records, registry.as_ref());
    emit(Some(&path("kept.jsonl")), &jsonl(&f.kept))?;
    emit(Some(&path("removed.jsonl")), &f.removed)?;
    emit(Some(&path("filter_report.json")), &to_json(&f.report))?;

    let config = rating_config(ctx, &f.kept)?;
    let board = rate_log(&f.kept, &config)?;
    emit(Some(&path("task_board.json")), &to_json(&board))?;

    let lb = leaderboard(ctx, &board)?;
    emit(Some(&path("leaderboard.json")), &to_json(&lb))?;
    emit(
        Some(&path("leaderboard.csv")),
        &render_board(&lb, BoardFormat::Csv)?,
    )?;
    emit(
        Some(&path("leaderboard.md")),
        &render_board(&lb, BoardFormat::Markdown)?,
    )?;

    println!(
        "{} records: {} rejected, {} removed, {} rated; artifacts in {}",
        ingested.records.len() + ingested.rejections.len(),
        ingested.rejections.len(),
        f.report.removed,
        f.report.valid,
        out_dir.display()
    );
    if lb.ranking.is_empty() {
        return Ok(());
    }
    print!("{}", render_board(&lb, BoardFormat::Markdown)?);
    Ok(())
}

//! Service state: the applied log, pending assignments and read views.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::Instant;

use judgeboard_core::aggregate::{
    aggregate, columns_from_board, normalize_task, AggregateOptions, NormalizedLeaderboard,
    TaskScoreColumn,
};
use judgeboard_core::ingest::{
    validate_value, FilterReport, QualityGate, RemovalReason, WorkerRegistry,
};
use judgeboard_core::rating::RatingConfig;
use judgeboard_core::schedule::{next_pair, ComparisonHistory, Pair, PairRequest, SeedSet};
use judgeboard_core::{Error as CoreError, JudgmentRecord, TaskBoard};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ServiceConfig;
use crate::store::{recover, Disposition, LogEntry, NullStorage, RecoveryError, Snapshot, Storage};

/// An error reported to clients as `{code, reason, detail}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code} {reason}: {detail}")]
pub struct ApiError {
    /// HTTP status.
    pub code: u16,
    pub reason: String,
    pub detail: String,
    /// Log offset, for submissions that were logged but not accepted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
}

impl ApiError {
    pub fn new(code: u16, reason: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            code,
            reason: reason.into(),
            detail: detail.into(),
            offset: None,
        }
    }

    fn removed(reason: RemovalReason, offset: u64, record: &JudgmentRecord) -> Self {
        let code = match reason {
            RemovalReason::UnqualifiedWorker => 403,
            _ => 422,
        };
        let detail = match reason {
            RemovalReason::UnqualifiedWorker => {
                format!("worker {} is not qualified", record.worker_id)
            }
            _ => format!("judgment {} failed the quality filter", record.id),
        };
        Self {
            offset: Some(offset),
            ..Self::new(code, reason.code(), detail)
        }
    }

    fn internal(detail: impl Into<String>) -> Self {
        Self::new(500, "internal", detail)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OpenError {
    #[error("invalid configuration: {0}")]
    Config(#[from] CoreError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error("replaying offset {offset}: {source}")]
    Replay { offset: u64, source: CoreError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AckStatus {
    Accepted,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub offset: u64,
    pub status: AckStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentView {
    pub assignment_id: String,
    pub task: String,
    pub seed: String,
    /// Shown on the left.
    pub agent_a: String,
    pub agent_b: String,
    pub video_a: String,
    pub video_b: String,
    pub expires_in_secs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoardView {
    Raw,
    Normalized,
}

impl std::str::FromStr for BoardView {
    type Err = ApiError;

    fn from_str(s: &str) -> Result<Self, ApiError> {
        match s {
            "raw" => Ok(Self::Raw),
            "normalized" => Ok(Self::Normalized),
            other => Err(ApiError::new(
                400,
                "invalid-view",
                format!("view must be raw or normalized, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingView {
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLeaderboard {
    pub offset: u64,
    pub view: BoardView,
    pub tasks: Vec<String>,
    /// task -> agent -> rating
    pub ratings: BTreeMap<String, BTreeMap<String, RatingView>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedView {
    pub offset: u64,
    pub view: BoardView,
    #[serde(flatten)]
    pub board: NormalizedLeaderboard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Leaderboard {
    Raw(RawLeaderboard),
    Normalized(NormalizedView),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsView {
    pub offset: u64,
    #[serde(flatten)]
    pub report: FilterReport,
}

#[derive(Debug, Clone)]
struct Pending {
    task: String,
    pair: Pair,
    seed: String,
    worker: String,
    expires: Instant,
}

type Combo = (String, Pair, String);

struct State {
    offset: u64,
    board: TaskBoard,
    history: ComparisonHistory,
    report: FilterReport,
    gate: QualityGate,
    /// id -> (offset, disposition, record)
    ids: HashMap<String, (u64, Disposition, JudgmentRecord)>,
    /// (task, pair, seed) combinations each worker has judged
    judged: HashMap<String, BTreeSet<Combo>>,
    pending: BTreeMap<u64, Pending>,
    next_assignment: u64,
    storage: Box<dyn Storage>,
}

pub struct Engine {
    config: ServiceConfig,
    profiles: Option<WorkerRegistry>,
    seeds: BTreeMap<String, SeedSet>,
    state: RwLock<State>,
}

impl State {
    fn index(&mut self, entry: &LogEntry) {
        let r = &entry.record;
        self.ids
            .insert(r.id.clone(), (entry.offset, entry.disposition, r.clone()));
        if let Ok(pair) = Pair::new(&r.agent_a, &r.agent_b) {
            self.judged.entry(r.worker_id.clone()).or_default().insert((
                r.task.clone(),
                pair,
                r.seed.clone(),
            ));
        }
        if entry.disposition == Disposition::Accepted {
            self.gate.remember(r);
        }
        self.offset = entry.offset;
    }

    /// Derived state for one entry, on copies; committed by the caller.
    fn derive(
        &self,
        entry: &LogEntry,
        rating: &RatingConfig,
    ) -> Result<(Option<TaskBoard>, FilterReport), CoreError> {
        let mut report = self.report.clone();
        match entry.disposition {
            Disposition::Accepted => {
                let mut board = self.board.clone();
                board.apply(&entry.record, rating)?;
                report.record_valid(&entry.record);
                Ok((Some(board), report))
            }
            Disposition::Removed(reason) => {
                report.record_removed(reason);
                Ok((None, report))
            }
        }
    }

    fn commit(&mut self, entry: &LogEntry, board: Option<TaskBoard>, report: FilterReport) {
        if let Some(board) = board {
            self.board = board;
            let r = &entry.record;
            let pair = Pair::new(&r.agent_a, &r.agent_b)
                .expect("validated records compare distinct agents");
            self.history.record(&r.task, &pair, &r.seed);
        }
        self.report = report;
        self.index(entry);
    }

    fn snapshot(&self, rating: &RatingConfig) -> Snapshot {
        Snapshot {
            offset: self.offset,
            rating: rating.clone(),
            board: self.board.clone(),
            history: self.history.clone(),
            report: self.report.clone(),
        }
    }
}

impl Engine {
    /// An engine that persists nothing.
    pub fn in_memory(
        config: ServiceConfig,
        profiles: Option<WorkerRegistry>,
    ) -> Result<Self, OpenError> {
        Self::with_storage(config, profiles, Box::new(NullStorage))
    }

    pub fn with_storage(
        config: ServiceConfig,
        profiles: Option<WorkerRegistry>,
        storage: Box<dyn Storage>,
    ) -> Result<Self, OpenError> {
        config.validate()?;
        let seeds = config
            .tasks
            .iter()
            .map(|t| {
                Ok((
                    t.name.clone(),
                    SeedSet::new(t.name.clone(), t.seeds.clone())?,
                ))
            })
            .collect::<Result<_, CoreError>>()?;
        let state = State {
            offset: 0,
            board: TaskBoard::new(&config.rating.params),
            history: ComparisonHistory::new(),
            report: FilterReport::default(),
            gate: QualityGate::new(config.filter),
            ids: HashMap::new(),
            judged: HashMap::new(),
            pending: BTreeMap::new(),
            next_assignment: 1,
            storage,
        };
        Ok(Self {
            config,
            profiles,
            seeds,
            state: RwLock::new(state),
        })
    }

    /// Opens or creates the log in `dir`, restoring the last snapshot and replaying the tail.
    pub fn open(
        dir: &Path,
        config: ServiceConfig,
        profiles: Option<WorkerRegistry>,
    ) -> Result<Self, OpenError> {
        config.validate()?;
        let recovered = recover(dir, config.fsync)?;
        if recovered.truncated_bytes > 0 {
            tracing::warn!(
                bytes = recovered.truncated_bytes,
                "dropped incomplete trailing log line"
            );
        }
        let engine = Self::with_storage(config, profiles, Box::new(recovered.storage))?;
        {
            let mut st = engine.write();
            let snapshot = recovered
                .snapshot
                .filter(|s| s.rating == engine.config.rating);
            let resume_at = match snapshot {
                Some(s) => {
                    st.board = s.board;
                    st.history = s.history;
                    st.report = s.report;
                    s.offset
                }
                None => 0,
            };
            for entry in &recovered.entries {
                if entry.offset <= resume_at {
                    st.index(entry);
                } else {
                    let (board, report) =
                        st.derive(entry, &engine.config.rating).map_err(|source| {
                            OpenError::Replay {
                                offset: entry.offset,
                                source,
                            }
                        })?;
                    st.commit(entry, board, report);
                }
            }
            tracing::info!(
                offset = st.offset,
                from_snapshot = resume_at,
                "log recovered"
            );
        }
        Ok(engine)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn offset(&self) -> u64 {
        self.read().offset
    }

    fn check_worker(&self, worker: &str) -> Result<(), ApiError> {
        if let Some(profiles) = &self.profiles {
            if !profiles
                .get(worker)
                .is_some_and(judgeboard_core::ingest::qualify)
            {
                return Err(ApiError::new(
                    403,
                    RemovalReason::UnqualifiedWorker.code(),
                    format!("worker {worker} is not qualified"),
                ));
            }
        }
        Ok(())
    }

    fn check_catalog(&self, r: &JudgmentRecord) -> Result<(), ApiError> {
        let task = self.config.task(&r.task).ok_or_else(|| {
            ApiError::new(
                400,
                "unknown-task",
                format!("task {} is not in the catalog", r.task),
            )
        })?;
        for agent in [&r.agent_a, &r.agent_b] {
            if !task.agents.contains(agent) {
                return Err(ApiError::new(
                    400,
                    "unknown-agent",
                    format!("agent {agent} is not rated on {}", r.task),
                ));
            }
        }
        if !task.seeds.contains(&r.seed) {
            return Err(ApiError::new(
                400,
                "unknown-seed",
                format!("seed {} is not a seed of {}", r.seed, r.task),
            ));
        }
        Ok(())
    }

    /// Validates, logs and applies one submitted judgment.
    ///
    /// Submissions are idempotent by id: a repeat gets the original outcome.
    pub fn submit(&self, value: &Value) -> Result<Ack, ApiError> {
        let record = validate_value(value)
            .map_err(|rej| ApiError::new(400, rej.reason.code(), rej.detail))?;
        self.check_catalog(&record)?;

        let mut st = self.write();
        if let Some((offset, disposition, original)) = st.ids.get(&record.id) {
            if *original != record {
                return Err(ApiError::new(
                    409,
                    "id-conflict",
                    format!("id {} was already used for a different judgment", record.id),
                ));
            }
            return match disposition {
                Disposition::Accepted => Ok(Ack {
                    offset: *offset,
                    status: AckStatus::Duplicate,
                }),
                Disposition::Removed(reason) => Err(ApiError::removed(*reason, *offset, original)),
            };
        }

        let disposition = match st.gate.check(&record, self.profiles.as_ref()) {
            Ok(()) => Disposition::Accepted,
            Err(reason) => Disposition::Removed(reason),
        };
        let entry = LogEntry {
            offset: st.offset + 1,
            record,
            disposition,
        };
        let (board, report) = st
            .derive(&entry, &self.config.rating)
            .map_err(|e| ApiError::new(422, "rating-update-failed", e.to_string()))?;
        st.storage.append(&entry.to_line()).map_err(|e| {
            ApiError::internal(format!("could not append to the judgment log: {e}"))
        })?;
        st.commit(&entry, board, report);

        let r = &entry.record;
        st.pending.retain(|_, p| {
            !(p.worker == r.worker_id
                && p.task == r.task
                && p.seed == r.seed
                && Pair::new(&r.agent_a, &r.agent_b).is_ok_and(|q| q == p.pair))
        });

        if entry.offset.is_multiple_of(self.config.snapshot_every) {
            let snap = st.snapshot(&self.config.rating);
            if let Err(e) = st.storage.write_snapshot(&snap) {
                tracing::warn!(offset = entry.offset, error = %e, "snapshot failed");
            }
        }

        match entry.disposition {
            Disposition::Accepted => Ok(Ack {
                offset: entry.offset,
                status: AckStatus::Accepted,
            }),
            Disposition::Removed(reason) => {
                Err(ApiError::removed(reason, entry.offset, &entry.record))
            }
        }
    }

    /// Hands out the next comparison for a worker, or `None` when there is no work.
    pub fn next_pair(
        &self,
        task: &str,
        worker: &str,
        now: Instant,
    ) -> Result<Option<AssignmentView>, ApiError> {
        let catalog = self.config.task(task).ok_or_else(|| {
            ApiError::new(
                404,
                "unknown-task",
                format!("task {task} is not in the catalog"),
            )
        })?;
        if worker.trim().is_empty() {
            return Err(ApiError::new(400, "missing-worker", "worker must be given"));
        }
        self.check_worker(worker)?;

        let mut st = self.write();
        st.pending.retain(|_, p| p.expires > now);

        let mut history = st.history.clone();
        let mut exclude: BTreeSet<(Pair, String)> = st
            .judged
            .get(worker)
            .map(|set| {
                set.iter()
                    .filter(|(t, _, _)| t == task)
                    .map(|(_, p, s)| (p.clone(), s.clone()))
                    .collect()
            })
            .unwrap_or_default();
        for p in st.pending.values().filter(|p| p.task == task) {
            history.record(task, &p.pair, &p.seed);
            if p.worker == worker {
                exclude.insert((p.pair.clone(), p.seed.clone()));
            }
        }

        let req = PairRequest {
            agents: &catalog.agents,
            board: &st.board,
            params: &self.config.rating.params_for(task),
            history: &history,
            seeds: &self.seeds[task],
            strategy: self.config.strategy,
            rng_seed: self.config.rng_seed,
            cap: self.config.pair_cap,
            exclude: Some(&exclude),
        };
        let assignment = match next_pair(&req) {
            Ok(a) => a,
            Err(CoreError::Saturated { .. } | CoreError::NoWork { .. }) => return Ok(None),
            Err(e) => return Err(ApiError::internal(e.to_string())),
        };

        let id = st.next_assignment;
        st.next_assignment += 1;
        st.pending.insert(
            id,
            Pending {
                task: task.to_owned(),
                pair: assignment.pair.clone(),
                seed: assignment.seed.clone(),
                worker: worker.to_owned(),
                expires: now + self.config.assignment_ttl,
            },
        );
        Ok(Some(AssignmentView {
            assignment_id: format!("asg-{id}"),
            task: task.to_owned(),
            video_a: self
                .config
                .video_url(task, &assignment.left, &assignment.seed),
            video_b: self
                .config
                .video_url(task, &assignment.right, &assignment.seed),
            seed: assignment.seed,
            agent_a: assignment.left,
            agent_b: assignment.right,
            expires_in_secs: self.config.assignment_ttl.as_secs(),
        }))
    }

    pub fn pending_count(&self, now: Instant) -> usize {
        self.read()
            .pending
            .values()
            .filter(|p| p.expires > now)
            .count()
    }

    pub fn leaderboard(&self, view: BoardView) -> Result<Leaderboard, ApiError> {
        let st = self.read();
        let tasks: Vec<String> = self.config.tasks.iter().map(|t| t.name.clone()).collect();
        match view {
            BoardView::Raw => {
                let ratings = self
                    .config
                    .tasks
                    .iter()
                    .map(|t| {
                        let mut agents: BTreeSet<&String> = t.agents.iter().collect();
                        if let Some(rated) = st.board.task(&t.name) {
                            agents.extend(rated.keys());
                        }
                        let column = agents
                            .into_iter()
                            .map(|a| {
                                let g = st.board.rating(&t.name, a);
                                (
                                    a.clone(),
                                    RatingView {
                                        mean: g.mean(),
                                        stddev: g.stddev(),
                                    },
                                )
                            })
                            .collect();
                        (t.name.clone(), column)
                    })
                    .collect();
                Ok(Leaderboard::Raw(RawLeaderboard {
                    offset: st.offset,
                    view,
                    tasks,
                    ratings,
                }))
            }
            BoardView::Normalized => {
                let (columns, uncertainty) =
                    columns_from_board(&st.board, &tasks, &self.config.roster());
                let normalized = columns
                    .iter()
                    .map(|c| {
                        Ok(TaskScoreColumn::new(
                            c.task.clone(),
                            normalize_task(c, self.config.stddev_convention)?,
                        ))
                    })
                    .collect::<Result<Vec<_>, CoreError>>()
                    .map_err(|e| ApiError::internal(e.to_string()))?;
                let board = aggregate(
                    &normalized,
                    &AggregateOptions {
                        missing: self.config.missing_agent,
                        uncertainty,
                    },
                )
                .map_err(|e| ApiError::internal(e.to_string()))?;
                Ok(Leaderboard::Normalized(NormalizedView {
                    offset: st.offset,
                    view,
                    board,
                }))
            }
        }
    }

    pub fn stats(&self) -> StatsView {
        let st = self.read();
        StatsView {
            offset: st.offset,
            report: st.report.clone(),
        }
    }
}

//! Judgment validation, worker qualification and answer quality filtering.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::rating::MatchOutcome;
use crate::{Error, Result};

/// One human pairwise comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub id: String,
    pub task: String,
    pub seed: String,
    pub agent_a: String,
    pub agent_b: String,
    pub outcome: MatchOutcome,
    pub worker_id: String,
    pub justification: String,
    pub submitted_at: DateTime<Utc>,
}

impl JudgmentRecord {
    /// Canonical processing order.
    pub fn order_key(&self) -> (DateTime<Utc>, &str) {
        (self.submitted_at, &self.id)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("judgment records always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    MalformedJson,
    MissingField,
    InvalidOutcome,
    InvalidTimestamp,
    SelfComparison,
    DuplicateId,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::MalformedJson => "malformed-json",
            RejectReason::MissingField => "missing-field",
            RejectReason::InvalidOutcome => "invalid-outcome",
            RejectReason::InvalidTimestamp => "invalid-timestamp",
            RejectReason::SelfComparison => "self-comparison",
            RejectReason::DuplicateId => "duplicate-id",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A record that failed schema validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the source file, 0 when not read from a file.
    pub line: usize,
    pub id: Option<String>,
    pub reason: RejectReason,
    pub detail: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.reason, self.detail)
    }
}

const FIELDS: [&str; 9] = [
    "id",
    "task",
    "seed",
    "agent_a",
    "agent_b",
    "outcome",
    "worker_id",
    "justification",
    "submitted_at",
];

/// Maps the outcome strings accepted on input, case-insensitively.
pub fn parse_outcome(raw: &str) -> Option<MatchOutcome> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "a" => Some(MatchOutcome::WinA),
        "b" => Some(MatchOutcome::WinB),
        "draw" | "tie" => Some(MatchOutcome::Draw),
        _ => None,
    }
}

/// Validates one parsed JSON object into a canonical record.
///
/// Does not check id uniqueness, see [`Validator`].
pub fn validate_value(value: &Value) -> std::result::Result<JudgmentRecord, Rejection> {
    let id_hint = value.get("id").and_then(Value::as_str).map(str::to_owned);
    let reject = |reason, detail: String| Rejection {
        line: 0,
        id: id_hint.clone(),
        reason,
        detail,
    };
    let obj: &Map<String, Value> = value
        .as_object()
        .ok_or_else(|| reject(RejectReason::MalformedJson, "expected a JSON object".into()))?;

    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for name in FIELDS {
        match obj.get(name) {
            Some(Value::String(s)) => {
                fields.insert(name, s.as_str());
            }
            Some(other) => {
                return Err(reject(
                    RejectReason::MissingField,
                    format!("field {name} must be a string, got {other}"),
                ))
            }
            None => {
                return Err(reject(
                    RejectReason::MissingField,
                    format!("missing field {name}"),
                ))
            }
        }
    }
    for name in ["id", "task", "seed", "agent_a", "agent_b", "worker_id"] {
        if fields[name].trim().is_empty() {
            return Err(reject(
                RejectReason::MissingField,
                format!("field {name} is empty"),
            ));
        }
    }

    let outcome = parse_outcome(fields["outcome"]).ok_or_else(|| {
        reject(
            RejectReason::InvalidOutcome,
            format!(
                "outcome {:?} is not one of A, B, draw, tie",
                fields["outcome"]
            ),
        )
    })?;
    let submitted_at = DateTime::parse_from_rfc3339(fields["submitted_at"])
        .map_err(|e| {
            reject(
                RejectReason::InvalidTimestamp,
                format!("submitted_at {:?}: {e}", fields["submitted_at"]),
            )
        })?
        .with_timezone(&Utc);

    let agent_a = fields["agent_a"].trim();
    let agent_b = fields["agent_b"].trim();
    if agent_a == agent_b {
        return Err(reject(
            RejectReason::SelfComparison,
            format!("agent_a and agent_b are both {agent_a}"),
        ));
    }

    Ok(JudgmentRecord {
        id: fields["id"].trim().to_owned(),
        task: fields["task"].trim().to_owned(),
        seed: fields["seed"].trim().to_owned(),
        agent_a: agent_a.to_owned(),
        agent_b: agent_b.to_owned(),
        outcome,
        worker_id: fields["worker_id"].trim().to_owned(),
        justification: fields["justification"].trim().to_owned(),
        submitted_at,
    })
}

/// Batch validator; remembers ids so that repeated ids are rejected.
#[derive(Debug, Default)]
pub struct Validator {
    seen: HashSet<String>,
}

impl Validator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn validate_line(&mut self, line: &str) -> std::result::Result<JudgmentRecord, Rejection> {
        let value: Value = serde_json::from_str(line).map_err(|e| Rejection {
            line: 0,
            id: None,
            reason: RejectReason::MalformedJson,
            detail: e.to_string(),
        })?;
        let record = validate_value(&value)?;
        if !self.seen.insert(record.id.clone()) {
            return Err(Rejection {
                line: 0,
                id: Some(record.id.clone()),
                reason: RejectReason::DuplicateId,
                detail: format!("id {} already seen", record.id),
            });
        }
        Ok(record)
    }
}

/// Output of reading a judgment JSONL stream.
#[derive(Debug, Default)]
pub struct Ingested {
    pub records: Vec<JudgmentRecord>,
    pub rejections: Vec<Rejection>,
}

/// Reads a JSONL judgment log. Bad lines are collected, not fatal.
pub fn read_judgments<R: BufRead>(reader: R) -> Result<Ingested> {
    let mut validator = Validator::new();
    let mut out = Ingested::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", idx + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        match validator.validate_line(&line) {
            Ok(r) => out.records.push(r),
            Err(mut rej) => {
                rej.line = idx + 1;
                out.rejections.push(rej);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: String,
    pub hit_acceptance_rate: f64,
    pub accepted_hits: u64,
    pub quiz_passed: bool,
}

pub const MIN_HIT_ACCEPTANCE_RATE: f64 = 0.99;
pub const MIN_ACCEPTED_HITS: u64 = 10_000;

/// Strictly above 99% acceptance, strictly more than 10,000 accepted HITs,
/// and the quiz passed.
pub fn qualify(worker: &WorkerProfile) -> bool {
    worker.hit_acceptance_rate > MIN_HIT_ACCEPTANCE_RATE
        && worker.accepted_hits > MIN_ACCEPTED_HITS
        && worker.quiz_passed
}

pub type WorkerRegistry = BTreeMap<String, WorkerProfile>;

/// Reads worker profiles from JSONL. Any malformed line is an error.
pub fn read_profiles<R: BufRead>(reader: R) -> Result<WorkerRegistry> {
    let mut out = WorkerRegistry::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", idx + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: WorkerProfile = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("profile line {}: {e}", idx + 1)))?;
        if !(0.0..=1.0).contains(&p.hit_acceptance_rate) {
            return Err(Error::Parse(format!(
                "profile line {}: hit_acceptance_rate {} outside [0, 1]",
                idx + 1,
                p.hit_acceptance_rate
            )));
        }
        out.insert(p.worker_id.clone(), p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalReason {
    UnqualifiedWorker,
    JustificationTooShort,
    ExactDuplicateJustification,
    NearDuplicateJustification,
}

impl RemovalReason {
    pub fn code(&self) -> &'static str {
        match self {
            RemovalReason::UnqualifiedWorker => "unqualified-worker",
            RemovalReason::JustificationTooShort => "justification-too-short",
            RemovalReason::ExactDuplicateJustification => "exact-duplicate-justification",
            RemovalReason::NearDuplicateJustification => "near-duplicate-justification",
        }
    }
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Minimum justification length in characters, after trimming.
    pub min_justification_chars: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_justification_chars: 10,
        }
    }
}

/// Lowercase, alphanumerics only, single spaces.
pub fn normalize_justification(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else if ch.is_whitespace() {
            pending_space = true;
        }
    }
    out
}

/// Incremental quality checks: qualification, length and duplicates
/// against every record accepted so far, across all workers.
#[derive(Debug, Clone, Default)]
pub struct QualityGate {
    config: FilterConfig,
    exact: HashSet<String>,
    normalized: HashSet<String>,
}

impl QualityGate {
    pub fn new(config: FilterConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    /// Checks one record; on success it becomes part of the duplicate reference set.
    ///
    /// With `profiles = None` qualification is not checked.
    pub fn admit(
        &mut self,
        record: &JudgmentRecord,
        profiles: Option<&WorkerRegistry>,
    ) -> std::result::Result<(), RemovalReason> {
        self.check(record, profiles)?;
        self.remember(record);
        Ok(())
    }

    /// Like [`QualityGate::admit`] but leaves the gate unchanged.
    pub fn check(
        &self,
        record: &JudgmentRecord,
        profiles: Option<&WorkerRegistry>,
    ) -> std::result::Result<(), RemovalReason> {
        if let Some(profiles) = profiles {
            if !profiles.get(&record.worker_id).is_some_and(qualify) {
                return Err(RemovalReason::UnqualifiedWorker);
            }
        }
        if record.justification.chars().count() < self.config.min_justification_chars {
            return Err(RemovalReason::JustificationTooShort);
        }
        if self.exact.contains(&record.justification) {
            return Err(RemovalReason::ExactDuplicateJustification);
        }
        if self
            .normalized
            .contains(&normalize_justification(&record.justification))
        {
            return Err(RemovalReason::NearDuplicateJustification);
        }
        Ok(())
    }

    /// Adds a record to the duplicate reference set without checking it.
    pub fn remember(&mut self, record: &JudgmentRecord) {
        self.exact.insert(record.justification.clone());
        self.normalized
            .insert(normalize_justification(&record.justification));
    }

    pub fn config(&self) -> FilterConfig {
        self.config
    }
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    /// Kept records in canonical `(submitted_at, id)` order.
    pub valid: Vec<JudgmentRecord>,
    pub removed: Vec<(JudgmentRecord, RemovalReason)>,
}

/// Splits validated records into kept and removed.
///
/// Records are visited in `(submitted_at, id)` order, so for a duplicate
/// group the earliest one survives regardless of input order.
pub fn filter_quality(
    records: &[JudgmentRecord],
    profiles: Option<&WorkerRegistry>,
    config: FilterConfig,
) -> FilterOutcome {
    let mut ordered: Vec<&JudgmentRecord> = records.iter().collect();
    ordered.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    let mut gate = QualityGate::new(config);
    let mut out = FilterOutcome::default();
    for record in ordered {
        match gate.admit(record, profiles) {
            Ok(()) => out.valid.push(record.clone()),
            Err(reason) => out.removed.push((record.clone(), reason)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawStat {
    pub total: u64,
    pub draws: u64,
    /// Percentage rounded to two decimals.
    pub draw_pct: f64,
}

impl DrawStat {
    fn new(total: u64, draws: u64) -> Self {
        let draw_pct = (10_000.0 * draws as f64 / total as f64).round() / 100.0;
        Self {
            total,
            draws,
            draw_pct,
        }
    }
}

/// Per-task answer and draw counts. Tasks without records are absent.
pub fn draw_stats<'a, I>(records: I) -> BTreeMap<String, DrawStat>
where
    I: IntoIterator<Item = &'a JudgmentRecord>,
{
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for r in records {
        let e = counts.entry(r.task.clone()).or_default();
        e.0 += 1;
        if r.outcome == MatchOutcome::Draw {
            e.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(task, (total, draws))| (task, DrawStat::new(total, draws)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerDistribution {
    pub total: u64,
    pub counts: BTreeMap<String, u64>,
    /// Largest single-worker share of all answers; 0 for no answers.
    pub max_share: f64,
}

impl WorkerDistribution {
    /// Workers sorted by descending answer count, ties by id.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(k, &c)| (k.as_str(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    /// Histogram of workers by answer count, in buckets of `width` answers.
    pub fn histogram(&self, width: u64) -> BTreeMap<u64, u64> {
        let width = width.max(1);
        let mut h = BTreeMap::new();
        for &c in self.counts.values() {
            *h.entry(c / width * width).or_default() += 1;
        }
        h
    }
}

pub fn worker_distribution<'a, I>(records: I) -> WorkerDistribution
where
    I: IntoIterator<Item = &'a JudgmentRecord>,
{
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for r in records {
        *counts.entry(r.worker_id.clone()).or_default() += 1;
        total += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    let max_share = if total == 0 {
        0.0
    } else {
        max as f64 / total as f64
    };
    WorkerDistribution {
        total,
        counts,
        max_share,
    }
}

/// Summary of one filtering pass.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: u64,
    pub removed: u64,
    pub valid: u64,
    pub removal_reasons: BTreeMap<String, u64>,
    pub per_worker: BTreeMap<String, u64>,
    pub per_task_draws: BTreeMap<String, DrawStat>,
}

impl FilterReport {
    pub fn from_outcome(outcome: &FilterOutcome) -> Self {
        let mut removal_reasons = BTreeMap::new();
        for (_, reason) in &outcome.removed {
            *removal_reasons.entry(reason.code().to_owned()).or_default() += 1;
        }
        let valid = outcome.valid.len() as u64;
        let removed = outcome.removed.len() as u64;
        Self {
            total: valid + removed,
            removed,
            valid,
            removal_reasons,
            per_worker: worker_distribution(&outcome.valid).counts,
            per_task_draws: draw_stats(&outcome.valid),
        }
    }

    /// Incrementally records one kept record.
    pub fn record_valid(&mut self, record: &JudgmentRecord) {
        self.total += 1;
        self.valid += 1;
        *self.per_worker.entry(record.worker_id.clone()).or_default() += 1;
        let stat = self
            .per_task_draws
            .entry(record.task.clone())
            .or_insert(DrawStat {
                total: 0,
                draws: 0,
                draw_pct: 0.0,
            });
        let draws = stat.draws + u64::from(record.outcome == MatchOutcome::Draw);
        *stat = DrawStat::new(stat.total + 1, draws);
    }

    /// Incrementally records one removed record.
    pub fn record_removed(&mut self, reason: RemovalReason) {
        self.total += 1;
        self.removed += 1;
        *self
            .removal_reasons
            .entry(reason.code().to_owned())
            .or_default() += 1;
    }
}

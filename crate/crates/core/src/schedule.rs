//! Choosing the next (agent pair, seed) a judge should compare.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rating::{match_quality, RatingParams, TaskBoard};
use crate::{Error, Result};

/// Default number of comparisons per pair before a task counts as saturated.
pub const DEFAULT_PAIR_CAP: u64 = 40;

/// Unordered pair of distinct agents, stored with the smaller id first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    first: String,
    second: String,
}

impl Pair {
    pub fn new(a: &str, b: &str) -> Result<Self> {
        match a.cmp(b) {
            std::cmp::Ordering::Less => Ok(Self {
                first: a.to_owned(),
                second: b.to_owned(),
            }),
            std::cmp::Ordering::Greater => Ok(Self {
                first: b.to_owned(),
                second: a.to_owned(),
            }),
            std::cmp::Ordering::Equal => Err(Error::InvalidArgument(format!(
                "cannot pair agent {a} with itself"
            ))),
        }
    }

    pub fn first(&self) -> &str {
        &self.first
    }

    pub fn second(&self) -> &str {
        &self.second
    }
}

/// All pairs of a roster, in lexicographic order.
pub fn all_pairs(agents: &BTreeSet<String>) -> Vec<Pair> {
    let v: Vec<&String> = agents.iter().collect();
    let mut out = Vec::with_capacity(v.len() * v.len().saturating_sub(1) / 2);
    for (i, a) in v.iter().enumerate() {
        for b in &v[i + 1..] {
            out.push(Pair {
                first: (*a).clone(),
                second: (*b).clone(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct HistoryEntry {
    task: String,
    agent_a: String,
    agent_b: String,
    seed: String,
    count: u64,
}

/// Comparison counts per (task, pair, seed). Pair totals are the sums over
/// seeds, so the two can never disagree.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<HistoryEntry>", into = "Vec<HistoryEntry>")]
pub struct ComparisonHistory {
    per_seed: BTreeMap<(String, Pair), BTreeMap<String, u64>>,
}

impl From<Vec<HistoryEntry>> for ComparisonHistory {
    fn from(entries: Vec<HistoryEntry>) -> Self {
        let mut h = Self::default();
        for e in entries {
            if let Ok(pair) = Pair::new(&e.agent_a, &e.agent_b) {
                *h.per_seed
                    .entry((e.task, pair))
                    .or_default()
                    .entry(e.seed)
                    .or_default() += e.count;
            }
        }
        h
    }
}

impl From<ComparisonHistory> for Vec<HistoryEntry> {
    fn from(h: ComparisonHistory) -> Self {
        h.per_seed
            .into_iter()
            .flat_map(|((task, pair), seeds)| {
                seeds.into_iter().map(move |(seed, count)| HistoryEntry {
                    task: task.clone(),
                    agent_a: pair.first.clone(),
                    agent_b: pair.second.clone(),
                    seed,
                    count,
                })
            })
            .collect()
    }
}

impl ComparisonHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, task: &str, pair: &Pair, seed: &str) {
        *self
            .per_seed
            .entry((task.to_owned(), pair.clone()))
            .or_default()
            .entry(seed.to_owned())
            .or_default() += 1;
    }

    pub fn count(&self, task: &str, pair: &Pair) -> u64 {
        self.per_seed
            .get(&(task.to_owned(), pair.clone()))
            .map_or(0, |m| m.values().sum())
    }

    pub fn seed_count(&self, task: &str, pair: &Pair, seed: &str) -> u64 {
        self.per_seed
            .get(&(task.to_owned(), pair.clone()))
            .and_then(|m| m.get(seed))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.per_seed.values().flat_map(|m| m.values()).sum()
    }
}

/// Evaluation seeds of one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    task: String,
    seeds: Vec<String>,
}

impl SeedSet {
    pub fn new(task: impl Into<String>, seeds: Vec<String>) -> Result<Self> {
        let task = task.into();
        if seeds.is_empty() {
            return Err(Error::InvalidArgument(format!("task {task} has no seeds")));
        }
        let unique: BTreeSet<&String> = seeds.iter().collect();
        if unique.len() != seeds.len() {
            return Err(Error::InvalidArgument(format!(
                "task {task} has repeated seeds"
            )));
        }
        Ok(Self { task, seeds })
    }

    /// `seed-0` .. `seed-{n-1}`.
    pub fn numbered(task: impl Into<String>, n: usize) -> Result<Self> {
        Self::new(task, (0..n).map(|i| format!("seed-{i}")).collect())
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn seeds(&self) -> &[String] {
        &self.seeds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    RoundRobin,
    InfoGain,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round_robin" | "round-robin" => Ok(Self::RoundRobin),
            "info_gain" | "info-gain" => Ok(Self::InfoGain),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?}"
            ))),
        }
    }
}

/// Everything the scheduler looks at for one decision.
#[derive(Debug, Clone)]
pub struct PairRequest<'a> {
    pub agents: &'a BTreeSet<String>,
    pub board: &'a TaskBoard,
    pub params: &'a RatingParams,
    pub history: &'a ComparisonHistory,
    pub seeds: &'a SeedSet,
    pub strategy: Strategy,
    pub rng_seed: u64,
    pub cap: u64,
    /// (pair, seed) combinations that must not be handed out.
    pub exclude: Option<&'a BTreeSet<(Pair, String)>>,
}

/// One scheduled comparison. `left`/`right` is the presentation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task: String,
    pub pair: Pair,
    pub seed: String,
    pub left: String,
    pub right: String,
}

fn presentation_swap(rng_seed: u64, task: &str, pair: &Pair, seed: &str, count: u64) -> bool {
    // FNV-1a over the decision inputs, so each decision gets its own stream
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in [
        task.as_bytes(),
        pair.first.as_bytes(),
        pair.second.as_bytes(),
        seed.as_bytes(),
    ] {
        for &b in part.iter().chain(std::iter::once(&0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ h ^ count.rotate_left(32));
    rng.gen_bool(0.5)
}

/// Picks the next comparison for a task.
pub fn next_pair(req: &PairRequest<'_>) -> Result<Assignment> {
    let task = req.seeds.task();
    if req.agents.len() < 2 {
        return Err(Error::InsufficientAgents(req.agents.len()));
    }
    let pairs = all_pairs(req.agents);
    let below_cap: Vec<(Pair, u64)> = pairs
        .into_iter()
        .map(|p| {
            let c = req.history.count(task, &p);
            (p, c)
        })
        .filter(|(_, c)| *c < req.cap)
        .collect();
    if below_cap.is_empty() {
        return Err(Error::Saturated {
            task: task.to_owned(),
            cap: req.cap,
        });
    }

    // least-used seed not excluded for the pair
    let pick_seed = |pair: &Pair| -> Option<(String, u64)> {
        req.seeds
            .seeds()
            .iter()
            .filter(|s| {
                req.exclude
                    .is_none_or(|ex| !ex.contains(&(pair.clone(), (*s).clone())))
            })
            .map(|s| (s.clone(), req.history.seed_count(task, pair, s)))
            .min_by_key(|(_, c)| *c)
    };
    let candidates: Vec<(Pair, u64, String)> = below_cap
        .into_iter()
        .filter_map(|(p, c)| pick_seed(&p).map(|(s, _)| (p, c, s)))
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoWork {
            task: task.to_owned(),
        });
    }

    let (pair, count, seed) = match req.strategy {
        Strategy::RoundRobin => candidates
            .into_iter()
            .min_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)))
            .expect("candidates is non-empty"),
        Strategy::InfoGain => {
            let mut scored = Vec::with_capacity(candidates.len());
            for (p, c, s) in candidates {
                let ra = req.board.rating(task, &p.first);
                let rb = req.board.rating(task, &p.second);
                let q = match_quality(ra, rb, req.params)?;
                scored.push((q, ra.stddev() + rb.stddev(), p, c, s));
            }
            let best = scored
                .into_iter()
                .min_by(|a, b| {
                    b.0.total_cmp(&a.0)
                        .then(b.1.total_cmp(&a.1))
                        .then_with(|| a.2.cmp(&b.2))
                })
                .expect("candidates is non-empty");
            (best.2, best.3, best.4)
        }
    };

    let (left, right) = if presentation_swap(req.rng_seed, task, &pair, &seed, count) {
        (pair.second.clone(), pair.first.clone())
    } else {
        (pair.first.clone(), pair.second.clone())
    };
    Ok(Assignment {
        task: task.to_owned(),
        pair,
        seed,
        left,
        right,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCoverage {
    pub agent_a: String,
    pub agent_b: String,
    pub total: u64,
    /// Counts in seed-set order.
    pub per_seed: Vec<(String, u64)>,
    pub below_floor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    pub min: u64,
    pub max: u64,
    pub mean: f64,
}

impl CountSummary {
    fn of(counts: impl IntoIterator<Item = u64>) -> Self {
        let v: Vec<u64> = counts.into_iter().collect();
        if v.is_empty() {
            return Self {
                min: 0,
                max: 0,
                mean: 0.0,
            };
        }
        Self {
            min: *v.iter().min().expect("non-empty"),
            max: *v.iter().max().expect("non-empty"),
            mean: v.iter().sum::<u64>() as f64 / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub task: String,
    pub total: u64,
    pub pairs: Vec<PairCoverage>,
    /// Over pair totals.
    pub pair_counts: CountSummary,
    /// Over every (pair, seed) cell.
    pub seed_counts: CountSummary,
    pub floor: u64,
}

/// Counts per pair and per seed for one task's roster.
pub fn coverage_report(
    history: &ComparisonHistory,
    agents: &BTreeSet<String>,
    seeds: &SeedSet,
    floor: u64,
) -> CoverageReport {
    let task = seeds.task();
    let pairs: Vec<PairCoverage> = all_pairs(agents)
        .into_iter()
        .map(|p| {
            let per_seed: Vec<(String, u64)> = seeds
                .seeds()
                .iter()
                .map(|s| (s.clone(), history.seed_count(task, &p, s)))
                .collect();
            let total = history.count(task, &p);
            PairCoverage {
                agent_a: p.first,
                agent_b: p.second,
                total,
                per_seed,
                below_floor: total < floor,
            }
        })
        .collect();
    CoverageReport {
        task: task.to_owned(),
        total: pairs.iter().map(|p| p.total).sum(),
        pair_counts: CountSummary::of(pairs.iter().map(|p| p.total)),
        seed_counts: CountSummary::of(
            pairs
                .iter()
                .flat_map(|p| p.per_seed.iter().map(|(_, c)| *c)),
        ),
        pairs,
        floor,
    }
}

use std::collections::BTreeSet;
use std::time::Duration;

use judgeboard_core::aggregate::{MissingPolicy, StddevConvention};
use judgeboard_core::ingest::FilterConfig;
use judgeboard_core::rating::{RatingConfig, RatingParams};
use judgeboard_core::schedule::{SeedSet, Strategy, DEFAULT_PAIR_CAP};
use judgeboard_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Per-task draw probability used unless configured otherwise.
pub const DEFAULT_DRAW_PROBABILITY: f64 = 0.30;

/// Agents and seeds of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCatalog {
    pub name: String,
    pub agents: BTreeSet<String>,
    pub seeds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Leaderboard column order.
    pub tasks: Vec<TaskCatalog>,
    pub rating: RatingConfig,
    pub filter: FilterConfig,
    pub stddev_convention: StddevConvention,
    pub missing_agent: MissingPolicy,
    pub strategy: Strategy,
    pub rng_seed: u64,
    pub pair_cap: u64,
    pub assignment_ttl: Duration,
    pub snapshot_every: u64,
    /// Placeholders `{task}`, `{agent}`, `{seed}`.
    pub video_url_template: String,
    /// When set, every request must carry it in `x-worker-token`.
    pub worker_token: Option<String>,
    /// fsync the log after every append.
    pub fsync: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            tasks: Vec::new(),
            rating: RatingConfig::from(RatingParams {
                draw_probability: DEFAULT_DRAW_PROBABILITY,
                ..Default::default()
            }),
            filter: FilterConfig::default(),
            stddev_convention: StddevConvention::Sample,
            missing_agent: MissingPolicy::Strict,
            strategy: Strategy::RoundRobin,
            rng_seed: 0,
            pair_cap: DEFAULT_PAIR_CAP,
            assignment_ttl: Duration::from_secs(30 * 60),
            snapshot_every: 500,
            video_url_template: "videos/{task}/{agent}/{seed}.mp4".into(),
            worker_token: None,
            fsync: true,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<()> {
        self.rating.validate()?;
        if self.tasks.is_empty() {
            return Err(Error::InvalidArgument("catalog has no tasks".into()));
        }
        let mut names = BTreeSet::new();
        for t in &self.tasks {
            if !names.insert(t.name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "task {} listed twice",
                    t.name
                )));
            }
            if t.agents.len() < 2 {
                return Err(Error::InsufficientAgents(t.agents.len()));
            }
            SeedSet::new(t.name.clone(), t.seeds.clone())?;
        }
        if self.pair_cap == 0 {
            return Err(Error::InvalidArgument("pair_cap must be positive".into()));
        }
        if self.snapshot_every == 0 {
            return Err(Error::InvalidArgument(
                "snapshot_every must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn task(&self, name: &str) -> Option<&TaskCatalog> {
        self.tasks.iter().find(|t| t.name == name)
    }

    pub fn roster(&self) -> BTreeSet<String> {
        self.tasks
            .iter()
            .flat_map(|t| t.agents.iter().cloned())
            .collect()
    }

    pub fn video_url(&self, task: &str, agent: &str, seed: &str) -> String {
        self.video_url_template
            .replace("{task}", task)
            .replace("{agent}", agent)
            .replace("{seed}", seed)
    }
}

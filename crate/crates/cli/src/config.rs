//! Flat TOML configuration and its resolution into typed settings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use judgeboard_core::aggregate::{MissingPolicy, StddevConvention};
use judgeboard_core::ingest::FilterConfig;
use judgeboard_core::rating::{DrawPolicy, RatingConfig, RatingParams};
use judgeboard_core::schedule::{Strategy, DEFAULT_PAIR_CAP};
use judgeboard_core::sim::{margin_for_pool_draw_rate, SimConfig};
use judgeboard_service::config::DEFAULT_DRAW_PROBABILITY;
use judgeboard_service::{ServiceConfig, TaskCatalog};
use serde::Deserialize;

pub const DEFAULT_TASKS: [&str; 4] = [
    "FindCave",
    "MakeWaterfall",
    "CreateVillageAnimalPen",
    "BuildVillageHouse",
];

/// Every key the config file accepts. All are optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mu0: Option<f64>,
    pub sigma0: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub draw_probability: Option<f64>,
    pub draw_probability_by_task: Option<BTreeMap<String, f64>>,
    pub calibrate_draw_probability: Option<bool>,
    pub draw_policy: Option<DrawPolicy>,

    pub min_justification_chars: Option<usize>,
    pub stddev_convention: Option<StddevConvention>,
    pub missing_agent: Option<MissingPolicy>,

    pub tasks: Option<Vec<String>>,
    pub agents: Option<Vec<String>>,
    pub seeds: Option<Vec<String>>,
    pub seeds_per_task: Option<usize>,
    pub strategy: Option<Strategy>,
    pub pair_cap: Option<u64>,
    pub rng_seed: Option<u64>,

    pub assignment_ttl_secs: Option<u64>,
    pub snapshot_every: Option<u64>,
    pub fsync: Option<bool>,
    pub video_url_template: Option<String>,
    pub worker_token: Option<String>,

    pub sim_skills: Option<BTreeMap<String, f64>>,
    pub sim_beta: Option<f64>,
    pub sim_draw_rate: Option<f64>,
    pub sim_draw_margin: Option<f64>,
    pub sim_judgments_per_task: Option<usize>,
    pub sim_seeds_per_task: Option<usize>,
    pub sim_workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies one `key=value` TrueSkill override.
    pub fn set_param(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .with_context(|| format!("expected key=value, got {assignment:?}"))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("value of {key} is not a number"))?;
        let slot = match key.trim() {
            "mu0" => &mut self.mu0,
            "sigma0" => &mut self.sigma0,
            "beta" => &mut self.beta,
            "tau" => &mut self.tau,
            "draw_probability" => &mut self.draw_probability,
            other => bail!(
                "unknown parameter {other:?} (expected mu0, sigma0, beta, tau or draw_probability)"
            ),
        };
        *slot = Some(value);
        Ok(())
    }

    pub fn rating_params(&self) -> RatingParams {
        let sigma0 = self.sigma0.unwrap_or(25.0 / 3.0);
        RatingParams {
            mu0: self.mu0.unwrap_or(25.0),
            sigma0,
            beta: self.beta.unwrap_or(sigma0 / 2.0),
            tau: self.tau.unwrap_or(sigma0 / 100.0),
            draw_probability: self.draw_probability.unwrap_or(DEFAULT_DRAW_PROBABILITY),
        }
    }

    pub fn rating(&self) -> Result<RatingConfig> {
        let config = RatingConfig {
            params: self.rating_params(),
            draw_probability_by_task: self.draw_probability_by_task.clone().unwrap_or_default(),
            draw_policy: self.draw_policy.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            min_justification_chars: self
                .min_justification_chars
                .unwrap_or(FilterConfig::default().min_justification_chars),
        }
    }

    pub fn stddev_convention(&self) -> StddevConvention {
        self.stddev_convention.unwrap_or_default()
    }

    pub fn missing_agent(&self) -> MissingPolicy {
        self.missing_agent.unwrap_or_default()
    }

    pub fn calibrate(&self) -> bool {
        self.calibrate_draw_probability.unwrap_or(false)
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed.unwrap_or(0)
    }

    pub fn seeds(&self) -> Vec<String> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.seeds_per_task.unwrap_or(10))
                .map(|i| format!("seed-{i}"))
                .collect(),
        }
    }

    pub fn service(&self) -> Result<ServiceConfig> {
        let tasks = self
            .tasks
            .clone()
            .context("config key `tasks` is required to serve")?;
        let agents: BTreeSet<String> = self
            .agents
            .clone()
            .context("config key `agents` is required to serve")?
            .into_iter()
            .collect();
        let defaults = ServiceConfig::default();
        let config = ServiceConfig {
            tasks: tasks
                .into_iter()
                .map(|name| TaskCatalog {
                    name,
                    agents: agents.clone(),
                    seeds: self.seeds(),
                })
                .collect(),
            rating: self.rating()?,
            filter: self.filter(),
            stddev_convention: self.stddev_convention(),
            missing_agent: self.missing_agent(),
            strategy: self.strategy.unwrap_or_default(),
            rng_seed: self.rng_seed(),
            pair_cap: self.pair_cap.unwrap_or(DEFAULT_PAIR_CAP),
            assignment_ttl: self
                .assignment_ttl_secs
                .map(Duration::from_secs)
                .unwrap_or(defaults.assignment_ttl),
            snapshot_every: self.snapshot_every.unwrap_or(defaults.snapshot_every),
            video_url_template: self
                .video_url_template
                .clone()
                .unwrap_or(defaults.video_url_template),
            worker_token: self.worker_token.clone(),
            fsync: self.fsync.unwrap_or(defaults.fsync),
        };
        config.validate()?;
        Ok(config)
    }

    /// Simulator settings; skills default to six agents one beta apart.
    pub fn sim(&self, noise_seed: u64) -> Result<SimConfig> {
        let beta = self.sim_beta.unwrap_or(self.rating_params().beta);
        let agents = match &self.sim_skills {
            Some(s) => s.clone(),
            None => (0..6)
                .map(|i| (format!("agent{i}"), i as f64 * beta))
                .collect(),
        };
        let draw_margin = match (self.sim_draw_margin, self.sim_draw_rate) {
            (Some(_), Some(_)) => bail!("set sim_draw_margin or sim_draw_rate, not both"),
            (Some(m), None) => m,
            (None, rate) => {
                let skills: Vec<f64> = agents.values().copied().collect();
                margin_for_pool_draw_rate(rate.unwrap_or(DEFAULT_DRAW_PROBABILITY), &skills, beta)?
            }
        };
        let n = agents.len();
        let tasks = self
            .tasks
            .clone()
            .unwrap_or_else(|| DEFAULT_TASKS.iter().map(|t| (*t).to_owned()).collect());
        let config = SimConfig {
            agents,
            beta,
            draw_margin,
            judgments_per_task: self
                .sim_judgments_per_task
                .unwrap_or(500 * n * n.saturating_sub(1) / 2),
            tasks,
            noise_seed,
            seeds_per_task: self.sim_seeds_per_task.unwrap_or(10),
            workers: self.sim_workers.unwrap_or(20),
        };
        config.validate()?;
        Ok(config)
    }
}

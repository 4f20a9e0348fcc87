//! Synthetic judges with known agent skills.
//!
//! Each comparison draws a performance `p ~ N(skill, beta^2)` for both
//! agents; the comparison is a draw when `|p_a - p_b| < draw_margin` and
//! otherwise goes to the higher performance.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{JudgmentRecord, WorkerProfile};
use crate::rating::{kernels, MatchOutcome};
use crate::schedule::{all_pairs, Pair};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub agents: BTreeMap<String, f64>,
    pub beta: f64,
    pub draw_margin: f64,
    pub judgments_per_task: usize,
    pub tasks: Vec<String>,
    pub noise_seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds_per_task: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_seeds() -> usize {
    10
}

fn default_workers() -> usize {
    20
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.agents.len() < 2 {
            return bad(format!("need at least 2 agents, got {}", self.agents.len()));
        }
        if let Some((a, s)) = self.agents.iter().find(|(_, s)| !s.is_finite()) {
            return bad(format!("skill of {a} is not finite ({s})"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.draw_margin >= 0.0 && self.draw_margin.is_finite()) {
            return bad(format!(
                "draw margin must be >= 0, got {}",
                self.draw_margin
            ));
        }
        if self.judgments_per_task == 0 || self.tasks.is_empty() {
            return bad("judgments_per_task and tasks must be non-empty".into());
        }
        if self.seeds_per_task == 0 || self.workers == 0 {
            return bad("seeds_per_task and workers must be positive".into());
        }
        Ok(())
    }

    /// Agents ordered by descending true skill, ties by id.
    pub fn true_ranking(&self) -> Vec<String> {
        let mut v: Vec<(&String, f64)> = self.agents.iter().map(|(a, s)| (a, *s)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v.into_iter().map(|(a, _)| a.clone()).collect()
    }
}

/// Draw margin giving draw probability `p` between equally skilled agents:
/// `2 Phi(m / (beta sqrt 2)) - 1 = p`.
pub fn margin_for_draw_rate(p: f64, beta: f64) -> Result<f64> {
    kernels::eps_from_draw_probability(p, beta, 2)
}

/// Expected draw rate when every pair of `skills` is compared equally often.
pub fn pool_draw_rate(margin: f64, skills: &[f64], beta: f64) -> f64 {
    let scale = std::f64::consts::SQRT_2 * beta;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, a) in skills.iter().enumerate() {
        for b in &skills[i + 1..] {
            let d = (a - b).abs();
            sum += kernels::cdf((margin - d) / scale) - kernels::cdf((-margin - d) / scale);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Draw margin giving an overall draw rate `p` across all pairs of the
/// given skills, found by bisection.
pub fn margin_for_pool_draw_rate(p: f64, skills: &[f64], beta: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "draw rate must be in (0, 1), got {p}"
        )));
    }
    if skills.len() < 2 || !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(
            "need at least 2 skills and a positive beta".into(),
        ));
    }
    let (mut lo, mut hi) = (0.0, beta);
    while pool_draw_rate(hi, skills, beta) < p {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NumericDomain(format!(
                "no margin reaches draw rate {p}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pool_draw_rate(mid, skills, beta) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn task_seed(noise_seed: u64, task_index: usize) -> u64 {
    // splitmix64 step
    let mut z =
        noise_seed.wrapping_add((task_index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Worker id used by the simulator.
pub fn worker_id(i: usize) -> String {
    format!("sim-worker-{i:03}")
}

/// Profiles for every simulated worker, all qualified.
pub fn worker_profiles(config: &SimConfig) -> Vec<WorkerProfile> {
    (0..config.workers)
        .map(|i| WorkerProfile {
            worker_id: worker_id(i),
            hit_acceptance_rate: 0.995,
            accepted_hits: 25_000,
            quiz_passed: true,
        })
        .collect()
}

fn base_time() -> DateTime<Utc> {
    DateTime::from_timestamp(1_667_260_800, 0).expect("fixed epoch is valid")
}

/// Generates judgments, deterministic in `noise_seed`.
///
/// Pairs are visited in cycles, each cycle in a freshly shuffled order, so
/// pair counts differ by at most one within a task. Records of all tasks are
/// interleaved by timestamp.
pub fn simulate(config: &SimConfig) -> Result<Vec<JudgmentRecord>> {
    config.validate()?;
    let roster = config.agents.keys().cloned().collect();
    let pairs = all_pairs(&roster);
    let mut out = Vec::with_capacity(config.judgments_per_task * config.tasks.len());
    let n_tasks = config.tasks.len() as i64;

    for (ti, task) in config.tasks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed(config.noise_seed, ti));
        let noise =
            Normal::new(0.0, config.beta).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut order: Vec<&Pair> = Vec::new();
        for j in 0..config.judgments_per_task {
            if order.is_empty() {
                order = pairs.iter().collect();
                order.shuffle(&mut rng);
            }
            let pair = order.pop().expect("refilled above");
            let (a, b) = if rng.gen_bool(0.5) {
                (pair.first(), pair.second())
            } else {
                (pair.second(), pair.first())
            };
            let pa = config.agents[a] + noise.sample(&mut rng);
            let pb = config.agents[b] + noise.sample(&mut rng);
            let outcome = if (pa - pb).abs() < config.draw_margin {
                MatchOutcome::Draw
            } else if pa > pb {
                MatchOutcome::WinA
            } else {
                MatchOutcome::WinB
            };
            let seed = format!("seed-{}", rng.gen_range(0..config.seeds_per_task));
            let worker = worker_id(rng.gen_range(0..config.workers));
            let id = format!("sim-{task}-{j:06}");
            let verdict = match outcome {
                MatchOutcome::WinA => format!("{a} did better than {b}"),
                MatchOutcome::WinB => format!("{b} did better than {a}"),
                MatchOutcome::Draw => format!("{a} and {b} did equally well"),
            };
            out.push(JudgmentRecord {
                justification: format!("{verdict} on {seed} (judgment {id})"),
                id,
                task: task.clone(),
                seed,
                agent_a: a.to_owned(),
                agent_b: b.to_owned(),
                outcome,
                worker_id: worker,
                submitted_at: base_time() + Duration::seconds(j as i64 * n_tasks + ti as i64),
            });
        }
    }
    out.sort_by(|x, y| x.order_key().cmp(&y.order_key()));
    Ok(out)
}

/// Kendall rank correlation (tau-a) between two orderings of the same items.
pub fn kendall_tau(ranking: &[String], reference: &[String]) -> Result<f64> {
    let pos: BTreeMap<&str, usize> = reference
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    if ranking.len() != reference.len() || pos.len() != reference.len() {
        return Err(Error::InvalidArgument(
            "rankings must hold the same distinct items".into(),
        ));
    }
    let mapped = ranking
        .iter()
        .map(|a| {
            pos.get(a.as_str()).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("{a} missing from reference ranking"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = mapped.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            if mapped[i] < mapped[j] {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    Ok((concordant - discordant) as f64 / (n * (n - 1) / 2) as f64)
}

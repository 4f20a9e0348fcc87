//! Two-player TrueSkill with draws.

pub mod kernels;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::JudgmentRecord;
use crate::{Error, Result};

/// Gaussian belief over one agent's skill on one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct Gaussian {
    mean: f64,
    stddev: f64,
}

#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mean: f64,
    stddev: f64,
}

impl TryFrom<GaussianRepr> for Gaussian {
    type Error = Error;

    fn try_from(r: GaussianRepr) -> Result<Self> {
        Gaussian::new(r.mean, r.stddev)
    }
}

impl From<Gaussian> for GaussianRepr {
    fn from(g: Gaussian) -> Self {
        GaussianRepr {
            mean: g.mean,
            stddev: g.stddev,
        }
    }
}

impl Gaussian {
    pub fn new(mean: f64, stddev: f64) -> Result<Self> {
        if !mean.is_finite() || !stddev.is_finite() || stddev <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gaussian needs finite mean and positive finite stddev, got ({mean}, {stddev})"
            )));
        }
        Ok(Self { mean, stddev })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stddev(&self) -> f64 {
        self.stddev
    }

    pub fn variance(&self) -> f64 {
        self.stddev * self.stddev
    }
}

/// TrueSkill hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingParams {
    pub mu0: f64,
    pub sigma0: f64,
    /// Performance noise.
    pub beta: f64,
    /// Dynamics noise added to each variance before an update.
    pub tau: f64,
    pub draw_probability: f64,
}

impl Default for RatingParams {
    /// mu0 = 25, sigma0 = 25/3, beta = sigma0/2, tau = sigma0/100, draw probability 0.1.
    fn default() -> Self {
        let sigma0 = 25.0 / 3.0;
        Self {
            mu0: 25.0,
            sigma0,
            beta: sigma0 / 2.0,
            tau: sigma0 / 100.0,
            draw_probability: 0.1,
        }
    }
}

impl RatingParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu0.is_finite()
            && self.sigma0.is_finite()
            && self.sigma0 > 0.0
            && self.beta.is_finite()
            && self.beta > 0.0
            && self.tau.is_finite()
            && self.tau >= 0.0
            && (0.0..1.0).contains(&self.draw_probability);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid rating parameters: {self:?}"
            )))
        }
    }

    pub fn prior(&self) -> Gaussian {
        Gaussian {
            mean: self.mu0,
            stddev: self.sigma0,
        }
    }

    pub fn draw_margin(&self) -> Result<f64> {
        kernels::eps_from_draw_probability(self.draw_probability, self.beta, 2)
    }
}

/// Result of one comparison, from the point of view of agent A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchOutcome {
    #[serde(rename = "A")]
    WinA,
    #[serde(rename = "B")]
    WinB,
    #[serde(rename = "draw", alias = "tie")]
    Draw,
}

impl MatchOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatchOutcome::WinA => "A",
            MatchOutcome::WinB => "B",
            MatchOutcome::Draw => "draw",
        }
    }

    /// Outcome seen from the other side.
    pub fn swapped(self) -> Self {
        match self {
            MatchOutcome::WinA => MatchOutcome::WinB,
            MatchOutcome::WinB => MatchOutcome::WinA,
            MatchOutcome::Draw => MatchOutcome::Draw,
        }
    }
}

impl fmt::Display for MatchOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Updates two ratings after one comparison.
pub fn update_pair(
    a: Gaussian,
    b: Gaussian,
    outcome: MatchOutcome,
    params: &RatingParams,
) -> Result<(Gaussian, Gaussian)> {
    params.validate()?;
    update_with_margin(a, b, outcome, params, params.draw_margin()?)
}

fn update_with_margin(
    a: Gaussian,
    b: Gaussian,
    outcome: MatchOutcome,
    params: &RatingParams,
    eps: f64,
) -> Result<(Gaussian, Gaussian)> {
    let tau2 = params.tau * params.tau;
    let var_a = a.variance() + tau2;
    let var_b = b.variance() + tau2;
    // grouped so that swapping a and b gives bit-identical results
    let c2 = 2.0 * params.beta * params.beta + (var_a + var_b);
    let c = c2.sqrt();
    let margin = eps / c;

    let with_context = |e: Error| {
        Error::NumericDomain(format!(
            "{outcome} update of ({}, {}) vs ({}, {}): {e}",
            a.mean, a.stddev, b.mean, b.stddev
        ))
    };

    // (v, w) and the sign with which v moves A's mean
    let (v, w, sign_a) = match outcome {
        MatchOutcome::WinA => {
            let t = (a.mean - b.mean) / c;
            let v = kernels::v_win(t, margin).map_err(with_context)?;
            let w = kernels::w_win(t, margin).map_err(with_context)?;
            (v, w, 1.0)
        }
        MatchOutcome::WinB => {
            let t = (b.mean - a.mean) / c;
            let v = kernels::v_win(t, margin).map_err(with_context)?;
            let w = kernels::w_win(t, margin).map_err(with_context)?;
            (v, w, -1.0)
        }
        MatchOutcome::Draw => {
            let t = (a.mean - b.mean) / c;
            let v = kernels::v_draw(t, margin).map_err(with_context)?;
            let w = kernels::w_draw(t, margin).map_err(with_context)?;
            (v, w, 1.0)
        }
    };

    let mean_a = a.mean + sign_a * (var_a / c) * v;
    let mean_b = b.mean - sign_a * (var_b / c) * v;
    let new_var_a = var_a * (1.0 - var_a / c2 * w);
    let new_var_b = var_b * (1.0 - var_b / c2 * w);

    let out_a = Gaussian::new(mean_a, new_var_a.sqrt()).map_err(with_context)?;
    let out_b = Gaussian::new(mean_b, new_var_b.sqrt()).map_err(with_context)?;
    Ok((out_a, out_b))
}

/// Draw-likelihood match quality, in (0, 1].
pub fn match_quality(a: Gaussian, b: Gaussian, params: &RatingParams) -> Result<f64> {
    params.validate()?;
    let two_beta2 = 2.0 * params.beta * params.beta;
    let c2 = two_beta2 + (a.variance() + b.variance());
    let diff = a.mean - b.mean;
    Ok((two_beta2 / c2).sqrt() * (-diff * diff / (2.0 * c2)).exp())
}

/// What the fold does with draw judgments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrawPolicy {
    /// Draws update both ratings through the draw branch.
    #[default]
    Update,
    /// Draws are ignored by the rating fold.
    Skip,
}

/// Rating parameters plus per-task overrides of the draw probability.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RatingConfig {
    pub params: RatingParams,
    #[serde(default)]
    pub draw_probability_by_task: BTreeMap<String, f64>,
    #[serde(default)]
    pub draw_policy: DrawPolicy,
}

impl From<RatingParams> for RatingConfig {
    fn from(params: RatingParams) -> Self {
        Self {
            params,
            ..Default::default()
        }
    }
}

impl RatingConfig {
    pub fn params_for(&self, task: &str) -> RatingParams {
        let mut p = self.params;
        if let Some(&dp) = self.draw_probability_by_task.get(task) {
            p.draw_probability = dp;
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        for task in self.draw_probability_by_task.keys() {
            self.params_for(task).validate()?;
        }
        Ok(())
    }
}

/// Ratings of every agent on every task, folded from a judgment log.
///
/// Agents that never appeared on a task read as the prior.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskBoard {
    prior: Option<Gaussian>,
    tasks: BTreeMap<String, BTreeMap<String, Gaussian>>,
}

impl TaskBoard {
    pub fn new(params: &RatingParams) -> Self {
        Self {
            prior: Some(params.prior()),
            tasks: BTreeMap::new(),
        }
    }

    pub fn prior(&self) -> Gaussian {
        self.prior
            .unwrap_or_else(|| RatingParams::default().prior())
    }

    pub fn rating(&self, task: &str, agent: &str) -> Gaussian {
        self.tasks
            .get(task)
            .and_then(|m| m.get(agent))
            .copied()
            .unwrap_or_else(|| self.prior())
    }

    /// Rated agents of one task.
    pub fn task(&self, task: &str) -> Option<&BTreeMap<String, Gaussian>> {
        self.tasks.get(task)
    }

    pub fn tasks(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, Gaussian>)> {
        self.tasks.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Registers an agent at the prior without changing an existing rating.
    pub fn ensure_agent(&mut self, task: &str, agent: &str) {
        let prior = self.prior();
        self.tasks
            .entry(task.to_owned())
            .or_default()
            .entry(agent.to_owned())
            .or_insert(prior);
    }

    pub fn set_rating(&mut self, task: &str, agent: &str, rating: Gaussian) {
        self.tasks
            .entry(task.to_owned())
            .or_default()
            .insert(agent.to_owned(), rating);
    }

    /// Applies one judgment to the board.
    pub fn apply(&mut self, record: &JudgmentRecord, config: &RatingConfig) -> Result<()> {
        if record.agent_a == record.agent_b {
            return Err(Error::InvalidArgument(format!(
                "record {} compares {} with itself",
                record.id, record.agent_a
            )));
        }
        let params = config.params_for(&record.task);
        let eps = params.draw_margin()?;
        self.apply_with_margin(record, &params, eps, config.draw_policy)
    }

    fn apply_with_margin(
        &mut self,
        record: &JudgmentRecord,
        params: &RatingParams,
        eps: f64,
        policy: DrawPolicy,
    ) -> Result<()> {
        if record.outcome == MatchOutcome::Draw && policy == DrawPolicy::Skip {
            self.ensure_agent(&record.task, &record.agent_a);
            self.ensure_agent(&record.task, &record.agent_b);
            return Ok(());
        }
        let a = self.rating(&record.task, &record.agent_a);
        let b = self.rating(&record.task, &record.agent_b);
        let (a, b) =
            update_with_margin(a, b, record.outcome, params, eps).map_err(|e| Error::Update {
                record_id: record.id.clone(),
                context: format!(
                    "{}: {} vs {}, {}",
                    record.task, record.agent_a, record.agent_b, record.outcome
                ),
                source: Box::new(e),
            })?;
        let column = self.tasks.entry(record.task.clone()).or_default();
        column.insert(record.agent_a.clone(), a);
        column.insert(record.agent_b.clone(), b);
        Ok(())
    }
}

/// Folds an ordered judgment log into per-task ratings.
pub fn rate_log<'a, I>(judgments: I, config: &RatingConfig) -> Result<TaskBoard>
where
    I: IntoIterator<Item = &'a JudgmentRecord>,
{
    config.validate()?;
    let mut board = TaskBoard::new(&config.params);
    let mut margins: BTreeMap<String, (RatingParams, f64)> = BTreeMap::new();
    for record in judgments {
        if record.agent_a == record.agent_b {
            return Err(Error::InvalidArgument(format!(
                "record {} compares {} with itself",
                record.id, record.agent_a
            )));
        }
        if !margins.contains_key(&record.task) {
            let p = config.params_for(&record.task);
            margins.insert(record.task.clone(), (p, p.draw_margin()?));
        }
        let (params, eps) = margins[&record.task];
        board.apply_with_margin(record, &params, eps, config.draw_policy)?;
    }
    Ok(board)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh() -> (Gaussian, Gaussian, RatingParams) {
        let p = RatingParams::default();
        (p.prior(), p.prior(), p)
    }

    #[test]
    fn gaussian_rejects_bad_values() {
        assert!(Gaussian::new(0.0, 0.0).is_err());
        assert!(Gaussian::new(f64::NAN, 1.0).is_err());
        assert!(Gaussian::new(0.0, -1.0).is_err());
        assert!(serde_json::from_str::<Gaussian>(r#"{"mean":1.0,"stddev":0.0}"#).is_err());
    }

    #[test]
    fn canonical_first_win() {
        let (a, b, p) = fresh();
        let (a, b) = update_pair(a, b, MatchOutcome::WinA, &p).unwrap();
        assert!((a.mean() - 29.396).abs() < 1e-3, "{a:?}");
        assert!((a.stddev() - 7.171).abs() < 1e-3);
        assert!((b.mean() - 20.604).abs() < 1e-3);
        assert!((b.stddev() - 7.171).abs() < 1e-3);
    }

    #[test]
    fn draw_between_equals_keeps_means() {
        let (a, b, p) = fresh();
        let (na, nb) = update_pair(a, b, MatchOutcome::Draw, &p).unwrap();
        assert!((na.mean() - a.mean()).abs() < 1e-12);
        assert!((nb.mean() - b.mean()).abs() < 1e-12);
        assert!(na.stddev() < a.stddev());
        assert!(nb.stddev() < b.stddev());
    }

    #[test]
    fn zero_draw_probability_draw_is_reported_with_context() {
        let (a, b, mut p) = fresh();
        p.draw_probability = 0.0;
        let err = update_pair(a, b, MatchOutcome::Draw, &p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("draw update"), "{msg}");
    }

    #[test]
    fn quality_of_fresh_ratings() {
        let (a, b, p) = fresh();
        let q = match_quality(a, b, &p).unwrap();
        let expected =
            (2.0 * p.beta.powi(2) / (2.0 * p.beta.powi(2) + 2.0 * p.sigma0.powi(2))).sqrt();
        assert!((q - expected).abs() < 1e-15);
        assert!((q - 0.447).abs() < 1e-3);
        let far = Gaussian::new(35.0, p.sigma0).unwrap();
        assert!(match_quality(far, b, &p).unwrap() < q);
    }

    #[test]
    fn params_validation() {
        let p = RatingParams {
            draw_probability: 1.0,
            ..RatingParams::default()
        };
        assert!(p.validate().is_err());
        let p = RatingParams {
            tau: -0.1,
            ..RatingParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn board_reads_prior_for_unknown_agents() {
        let p = RatingParams::default();
        let board = rate_log(std::iter::empty(), &p.into()).unwrap();
        assert_eq!(board.rating("FindCave", "anyone"), p.prior());
    }
}

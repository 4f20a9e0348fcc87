//! Per-task standardization of rating means and cross-task aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rating::TaskBoard;
use crate::{Error, Result};

/// Raw (or normalized) scores of every agent on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScoreColumn {
    pub task: String,
    pub entries: BTreeMap<String, f64>,
}

impl TaskScoreColumn {
    pub fn new(task: impl Into<String>, entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self {
            task: task.into(),
            entries: entries.into_iter().collect(),
        }
    }
}

/// Divisor used for the column standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StddevConvention {
    /// Divide by N - 1.
    #[default]
    Sample,
    /// Divide by N.
    Population,
}

impl FromStr for StddevConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(Self::Sample),
            "population" => Ok(Self::Population),
            other => Err(Error::InvalidArgument(format!(
                "stddev convention must be sample or population, got {other:?}"
            ))),
        }
    }
}

/// Lower bound applied to the column standard deviation before dividing.
pub const MIN_SCALE: f64 = 1.0;

/// `(x - mean) / max(stddev, 1)` over one task column.
pub fn normalize_task(
    column: &TaskScoreColumn,
    convention: StddevConvention,
) -> Result<BTreeMap<String, f64>> {
    let n = column.entries.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "task {} has {n} rated agent(s); normalization needs at least 2",
            column.task
        )));
    }
    if let Some((agent, x)) = column.entries.iter().find(|(_, x)| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "task {}: score of {agent} is not finite ({x})",
            column.task
        )));
    }
    let mut mean = column.entries.values().sum::<f64>() / n as f64;
    // second pass removes the rounding error of the first
    mean += column.entries.values().map(|x| x - mean).sum::<f64>() / n as f64;
    let ss: f64 = column
        .entries
        .values()
        .map(|x| (x - mean) * (x - mean))
        .sum();
    let dof = match convention {
        StddevConvention::Sample => (n - 1) as f64,
        StddevConvention::Population => n as f64,
    };
    let scale = (ss / dof).sqrt().max(MIN_SCALE);
    Ok(column
        .entries
        .iter()
        .map(|(agent, x)| (agent.clone(), (x - mean) / scale))
        .collect())
}

/// Mean columns of a rated board, in the given task order.
///
/// Every agent in `roster` gets an entry on every task, at the prior when
/// it was never rated there. Returns the columns and each agent's summed
/// rating stddev across tasks, the ranking tie-breaker.
pub fn columns_from_board(
    board: &TaskBoard,
    tasks: &[String],
    roster: &BTreeSet<String>,
) -> (Vec<TaskScoreColumn>, BTreeMap<String, f64>) {
    let mut uncertainty: BTreeMap<String, f64> = BTreeMap::new();
    let columns = tasks
        .iter()
        .map(|task| {
            let mut agents: BTreeSet<&str> = roster.iter().map(String::as_str).collect();
            if let Some(rated) = board.task(task) {
                agents.extend(rated.keys().map(String::as_str));
            }
            let entries = agents
                .into_iter()
                .map(|agent| {
                    let g = board.rating(task, agent);
                    *uncertainty.entry(agent.to_owned()).or_default() += g.stddev();
                    (agent.to_owned(), g.mean())
                })
                .collect();
            TaskScoreColumn {
                task: task.clone(),
                entries,
            }
        })
        .collect();
    (columns, uncertainty)
}

/// What to do with an agent absent from some task column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    #[default]
    Strict,
    /// Substitute the task's minimum normalized score and flag the agent.
    Lenient,
}

impl FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Self::Strict),
            "lenient" => Ok(Self::Lenient),
            other => Err(Error::InvalidArgument(format!(
                "missing-agent policy must be strict or lenient, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AggregateOptions {
    pub missing: MissingPolicy,
    /// Summed rating stddev per agent; absent agents count as 0.
    pub uncertainty: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedLeaderboard {
    /// Task columns in display order.
    pub tasks: Vec<String>,
    pub per_task: BTreeMap<String, BTreeMap<String, f64>>,
    pub final_sum: BTreeMap<String, f64>,
    pub final_avg: BTreeMap<String, f64>,
    /// Best first: higher sum, then lower summed stddev, then agent id.
    pub ranking: Vec<String>,
    /// Agents whose score was filled in for a missing task.
    #[serde(default)]
    pub flagged: BTreeSet<String>,
}

/// Sums normalized scores over tasks and ranks the agents.
pub fn aggregate(
    columns: &[TaskScoreColumn],
    options: &AggregateOptions,
) -> Result<NormalizedLeaderboard> {
    let agents: BTreeSet<&str> = columns
        .iter()
        .flat_map(|c| c.entries.keys().map(String::as_str))
        .collect();
    let mut per_task = BTreeMap::new();
    let mut flagged = BTreeSet::new();
    let mut final_sum: BTreeMap<String, f64> =
        agents.iter().map(|a| ((*a).to_owned(), 0.0)).collect();

    for column in columns {
        if let Some((agent, x)) = column.entries.iter().find(|(_, x)| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "task {}: score of {agent} is not finite ({x})",
                column.task
            )));
        }
        let floor = column
            .entries
            .values()
            .copied()
            .min_by(f64::total_cmp)
            .unwrap_or(0.0);
        let mut filled = column.entries.clone();
        for agent in &agents {
            if !filled.contains_key(*agent) {
                match options.missing {
                    MissingPolicy::Strict => {
                        return Err(Error::MissingAgent {
                            agent: (*agent).to_owned(),
                            task: column.task.clone(),
                        })
                    }
                    MissingPolicy::Lenient => {
                        filled.insert((*agent).to_owned(), floor);
                        flagged.insert((*agent).to_owned());
                    }
                }
            }
        }
        for (agent, x) in &filled {
            *final_sum
                .get_mut(agent)
                .expect("agent set covers every column") += x;
        }
        per_task.insert(column.task.clone(), filled);
    }

    let n_tasks = columns.len();
    let final_avg = final_sum
        .iter()
        .map(|(a, s)| {
            let avg = if n_tasks == 0 {
                0.0
            } else {
                s / n_tasks as f64
            };
            (a.clone(), avg)
        })
        .collect();

    let spread = |a: &str| options.uncertainty.get(a).copied().unwrap_or(0.0);
    let mut ranking: Vec<String> = agents.iter().map(|a| (*a).to_owned()).collect();
    ranking.sort_by(|a, b| {
        final_sum[b]
            .total_cmp(&final_sum[a])
            .then(spread(a).total_cmp(&spread(b)))
            .then(a.cmp(b))
    });

    Ok(NormalizedLeaderboard {
        tasks: columns.iter().map(|c| c.task.clone()).collect(),
        per_task,
        final_sum,
        final_avg,
        ranking,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoardFormat {
    Csv,
    Markdown,
    Json,
}

impl FromStr for BoardFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "md" | "markdown" => Ok(Self::Markdown),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown board format {other:?}"
            ))),
        }
    }
}

impl fmt::Display for BoardFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Markdown => "markdown",
            Self::Json => "json",
        })
    }
}

/// A leaderboard as displayed: values rounded to two decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplayTable {
    pub tasks: Vec<String>,
    pub rows: Vec<DisplayRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplayRow {
    pub team: String,
    pub scores: Vec<f64>,
    pub average: f64,
}

fn round2(x: f64) -> f64 {
    format_score(x).parse().expect("formatted score parses")
}

/// Two-decimal display of one score, without negative zero.
pub fn format_score(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_owned()
    } else {
        s
    }
}

impl NormalizedLeaderboard {
    pub fn display_table(&self) -> DisplayTable {
        let rows = self
            .ranking
            .iter()
            .map(|team| DisplayRow {
                team: team.clone(),
                scores: self
                    .tasks
                    .iter()
                    .map(|t| round2(self.per_task[t][team]))
                    .collect(),
                average: round2(self.final_avg[team]),
            })
            .collect();
        DisplayTable {
            tasks: self.tasks.clone(),
            rows,
        }
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["Team".to_owned()];
        h.extend(self.tasks.iter().cloned());
        h.push("Average".to_owned());
        h
    }

    fn display_cells(&self, team: &str) -> Vec<String> {
        let mut cells = vec![team.to_owned()];
        cells.extend(
            self.tasks
                .iter()
                .map(|t| format_score(self.per_task[t][team])),
        );
        cells.push(format_score(self.final_avg[team]));
        cells
    }
}

/// Renders a leaderboard laid out as team, one column per task, Average.
pub fn render_board(board: &NormalizedLeaderboard, format: BoardFormat) -> Result<String> {
    match format {
        BoardFormat::Json => serde_json::to_string_pretty(board)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::InvalidArgument(e.to_string())),
        BoardFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let write = |w: &mut csv::Writer<Vec<u8>>, rec: Vec<String>| {
                w.write_record(rec)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))
            };
            write(&mut w, board.header())?;
            for team in &board.ranking {
                write(&mut w, board.display_cells(team))?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        BoardFormat::Markdown => {
            let header = board.header();
            let mut out = format!("| {} |\n", header.join(" | "));
            out.push_str("|---|");
            for _ in 1..header.len() {
                out.push_str("---:|");
            }
            out.push('\n');
            for team in &board.ranking {
                let cells: Vec<String> = board
                    .display_cells(team)
                    .into_iter()
                    .map(|c| c.replace('|', "\\|"))
                    .collect();
                out.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
            Ok(out)
        }
    }
}

/// Parses the CSV produced by [`render_board`].
pub fn parse_board_csv(text: &str) -> Result<DisplayTable> {
    let (tasks, rows) = parse_score_csv(text)?;
    let rows = rows
        .into_iter()
        .map(|(team, mut scores)| {
            let average = scores
                .pop()
                .ok_or_else(|| Error::Parse(format!("row {team} has no Average column")))?;
            Ok(DisplayRow {
                team,
                scores,
                average,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if tasks.last().map(String::as_str) != Some("Average") {
        return Err(Error::Parse("last column must be Average".into()));
    }
    Ok(DisplayTable {
        tasks: tasks[..tasks.len() - 1].to_vec(),
        rows,
    })
}

/// Parses a wide per-task score table: `Team,<task>...[,Average]`.
///
/// An Average column, if present, is dropped; the result can feed
/// [`aggregate`] directly.
pub fn parse_task_columns(text: &str) -> Result<Vec<TaskScoreColumn>> {
    let (mut tasks, rows) = parse_score_csv(text)?;
    let drop_avg = tasks.last().map(String::as_str) == Some("Average");
    if drop_avg {
        tasks.pop();
    }
    let mut columns: Vec<TaskScoreColumn> = tasks
        .iter()
        .map(|t| TaskScoreColumn {
            task: t.clone(),
            entries: BTreeMap::new(),
        })
        .collect();
    for (team, scores) in rows {
        for (col, x) in columns.iter_mut().zip(scores) {
            if col.entries.insert(team.clone(), x).is_some() {
                return Err(Error::Parse(format!("team {team} appears twice")));
            }
        }
    }
    Ok(columns)
}

type ScoreRows = Vec<(String, Vec<f64>)>;

fn parse_score_csv(text: &str) -> Result<(Vec<String>, ScoreRows)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(Error::Parse(
            "score table needs a team column and at least one score column".into(),
        ));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", i + 2)))?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                i + 2,
                rec.len(),
                header.len()
            )));
        }
        let scores = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {c:?}: {e}", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((rec[0].to_owned(), scores));
    }
    Ok((columns, rows))
}

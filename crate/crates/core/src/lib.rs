//! Rating engine for crowdsourced pairwise judgments.
//!
//! Human judges compare two agents on the same task and seed and answer
//! "A", "B" or "draw". This crate turns a log of such answers into a
//! leaderboard:
//!
//! - [`ingest`] validates JSONL judgment records, checks worker
//!   qualification and removes low-quality answers.
//! - [`rating`] folds the surviving judgments into two-player TrueSkill
//!   ratings per task, including the draw branch.
//! - [`aggregate`] standardizes the rating means per task and sums them
//!   across tasks into a final ranking.
//! - [`schedule`] decides which pair of agents a judge should see next.
//! - [`sim`] generates synthetic judgments from known skills, used to
//!   check that the whole pipeline recovers the true ordering.

pub mod aggregate;
mod error;
pub mod ingest;
pub mod rating;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
pub use ingest::JudgmentRecord;
pub use rating::{Gaussian, MatchOutcome, RatingParams, TaskBoard};

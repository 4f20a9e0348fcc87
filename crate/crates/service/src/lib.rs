//! Judging service: submission, pair assignment and leaderboards over an
//! append-only judgment log.

pub mod config;
pub mod engine;
pub mod http;
pub mod store;

pub use config::{ServiceConfig, TaskCatalog};
pub use engine::{
    Ack, AckStatus, ApiError, AssignmentView, BoardView, Engine, Leaderboard, OpenError,
};

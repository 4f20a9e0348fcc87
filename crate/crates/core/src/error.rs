use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rating update failed for record {record_id} ({context}): {source}")]
    Update {
        record_id: String,
        /// `task: a vs b, outcome`
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("agent {agent} has no score for task {task}")]
    MissingAgent { agent: String, task: String },

    #[error("need at least 2 agents to schedule a comparison, got {0}")]
    InsufficientAgents(usize),

    #[error("every pair for task {task} has reached the cap of {cap} comparisons")]
    Saturated { task: String, cap: u64 },

    #[error("no unassigned (pair, seed) combination left for task {task}")]
    NoWork { task: String },

    #[error("malformed input: {0}")]
    Parse(String),
}

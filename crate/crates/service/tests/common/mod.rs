#![allow(dead_code)]

use judgeboard_core::ingest::{WorkerProfile, WorkerRegistry};
use judgeboard_core::JudgmentRecord;
use judgeboard_service::{ServiceConfig, TaskCatalog};
use serde_json::{json, Value};

pub const TASKS: [&str; 2] = ["FindCave", "MakeWaterfall"];

pub fn catalog(agents: &[&str], seeds: usize) -> ServiceConfig {
    ServiceConfig {
        tasks: TASKS
            .iter()
            .map(|t| TaskCatalog {
                name: (*t).to_owned(),
                agents: agents.iter().map(|a| (*a).to_owned()).collect(),
                seeds: (0..seeds).map(|i| format!("seed-{i}")).collect(),
            })
            .collect(),
        fsync: false,
        ..Default::default()
    }
}

pub fn profiles(workers: &[&str]) -> WorkerRegistry {
    let mut reg: WorkerRegistry = workers
        .iter()
        .map(|w| {
            (
                (*w).to_owned(),
                WorkerProfile {
                    worker_id: (*w).to_owned(),
                    hit_acceptance_rate: 0.995,
                    accepted_hits: 20_000,
                    quiz_passed: true,
                },
            )
        })
        .collect();
    reg.insert(
        "novice".into(),
        WorkerProfile {
            worker_id: "novice".into(),
            hit_acceptance_rate: 0.995,
            accepted_hits: 500,
            quiz_passed: true,
        },
    );
    reg
}

pub fn judgment(id: usize, task: &str, a: &str, b: &str, outcome: &str, worker: &str) -> Value {
    json!({
        "id": format!("j{id:05}"),
        "task": task,
        "seed": format!("seed-{}", id % 3),
        "agent_a": a,
        "agent_b": b,
        "outcome": outcome,
        "worker_id": worker,
        "justification": format!("reason number {id}: {a} versus {b}"),
        "submitted_at": format!("2022-11-01T{:02}:{:02}:{:02}Z", id / 3600 % 24, id / 60 % 60, id % 60),
    })
}

/// `n` judgments over the agents, deterministic in `salt`.
pub fn stream(n: usize, agents: &[&str], salt: usize) -> Vec<Value> {
    let outcomes = ["A", "B", "draw"];
    (0..n)
        .map(|i| {
            let k = i.wrapping_mul(2_654_435_761).wrapping_add(salt) % 1_000_003;
            let a = k % agents.len();
            let b = (a + 1 + k / 7 % (agents.len() - 1)) % agents.len();
            judgment(
                i,
                TASKS[k / 3 % TASKS.len()],
                agents[a],
                agents[b],
                outcomes[k / 11 % 3],
                "w1",
            )
        })
        .collect()
}

pub fn to_record(v: &Value) -> JudgmentRecord {
    judgeboard_core::ingest::validate_value(v).unwrap()
}

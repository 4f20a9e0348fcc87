#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{DateTime, Duration, Utc};
use judgeboard_core::ingest::WorkerProfile;
use judgeboard_core::rating::MatchOutcome;
use judgeboard_core::JudgmentRecord;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TASKS: [&str; 4] = [
    "FindCave",
    "MakeWaterfall",
    "CreateVillageAnimalPen",
    "BuildVillageHouse",
];

/// Valid answers and draws per task, as published.
pub const TASK_COUNTS: [(&str, u64, u64); 4] = [
    ("FindCave", 722, 201),
    ("MakeWaterfall", 682, 210),
    ("CreateVillageAnimalPen", 914, 404),
    ("BuildVillageHouse", 731, 320),
];
pub const DRAW_PCT: [(&str, f64); 4] = [
    ("FindCave", 27.84),
    ("MakeWaterfall", 30.79),
    ("CreateVillageAnimalPen", 44.20),
    ("BuildVillageHouse", 43.78),
];

pub const TEAMS: [&str; 15] = [
    "GoUp",
    "UniTeam",
    "voggite",
    "JustATry",
    "TheRealMiners",
    "yamato.kataoka",
    "corianas",
    "Li_and_Ivan",
    "KAIROS",
    "Miner007",
    "KABasalt",
    "Human2",
    "Human1",
    "BC-Baseline",
    "Random",
];

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_judgeboard"))
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn judgeboard(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn base_time() -> DateTime<Utc> {
    DateTime::from_timestamp(1_667_260_800, 0).unwrap()
}

fn qualified(id: &str) -> WorkerProfile {
    WorkerProfile {
        worker_id: id.to_owned(),
        hit_acceptance_rate: 0.995,
        accepted_hits: 12_000,
        quiz_passed: true,
    }
}

pub struct FilterFixture {
    pub records: Vec<JudgmentRecord>,
    pub profiles: Vec<WorkerProfile>,
    /// Ids of the low-quality records that were planted.
    pub planted: BTreeSet<String>,
}

/// 3,049 good answers from 65 qualified workers with the published
/// per-task draw counts, plus 417 planted bad ones: 150 from unqualified
/// workers, 90 with too-short justifications, 97 exact and 80 near copies
/// of an earlier good justification.
pub fn filter_fixture(seed: u64) -> FilterFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // one heavy worker with 299 answers, 64 others with 11..=74 plus 30 extra
    let workers: Vec<String> = (0..65).map(|i| format!("worker-{i:02}")).collect();
    let mut quota: Vec<usize> = vec![299];
    quota.extend((0..64).map(|i| 11 + i + usize::from(i < 30)));
    assert_eq!(quota.iter().sum::<usize>(), 3049);
    let mut owners: Vec<&String> = workers
        .iter()
        .zip(&quota)
        .flat_map(|(w, q)| std::iter::repeat_n(w, *q))
        .collect();
    owners.shuffle(&mut rng);

    let mut good = Vec::with_capacity(3049);
    for (task, total, draws) in TASK_COUNTS {
        let mut outcomes: Vec<MatchOutcome> = (0..total)
            .map(|k| {
                if k < draws {
                    MatchOutcome::Draw
                } else if k % 2 == 0 {
                    MatchOutcome::WinA
                } else {
                    MatchOutcome::WinB
                }
            })
            .collect();
        outcomes.shuffle(&mut rng);
        for outcome in outcomes {
            good.push((task, outcome));
        }
    }
    good.shuffle(&mut rng);

    let pick_pair = |rng: &mut ChaCha8Rng| {
        let pair: Vec<&&str> = TEAMS.choose_multiple(rng, 2).collect();
        (pair[0].to_string(), pair[1].to_string())
    };

    let mut records = Vec::new();
    for (i, ((task, outcome), worker)) in good.into_iter().zip(owners).enumerate() {
        let (a, b) = pick_pair(&mut rng);
        records.push(JudgmentRecord {
            id: format!("ans-{i:05}"),
            task: task.to_owned(),
            seed: format!("seed-{}", rng.gen_range(0..5)),
            agent_a: a.clone(),
            agent_b: b.clone(),
            outcome,
            worker_id: worker.clone(),
            justification: format!(
                "Answer {i}: compared {a} and {b} on how well each finished the task"
            ),
            submitted_at: base_time() + Duration::seconds(10 * i as i64),
        });
    }

    let mut planted = BTreeSet::new();
    let mut plant = |records: &mut Vec<JudgmentRecord>,
                     rng: &mut ChaCha8Rng,
                     worker: &str,
                     justification: String,
                     after: i64| {
        let k = planted.len();
        let (a, b) = pick_pair(rng);
        let id = format!("bad-{k:04}");
        planted.insert(id.clone());
        records.push(JudgmentRecord {
            id,
            task: TASKS[rng.gen_range(0..4)].to_owned(),
            seed: format!("seed-{}", rng.gen_range(0..5)),
            agent_a: a,
            agent_b: b,
            outcome: [MatchOutcome::WinA, MatchOutcome::WinB, MatchOutcome::Draw]
                [rng.gen_range(0..3)],
            worker_id: worker.to_owned(),
            justification,
            submitted_at: base_time() + Duration::seconds(after + rng.gen_range(1..5000)),
        });
    };

    let unqualified = ["low-rate", "few-hits", "no-quiz", "no-profile"];
    for k in 0..150 {
        let w = unqualified[k % 4];
        plant(
            &mut records,
            &mut rng,
            w,
            format!("Unvetted answer {k} with a perfectly long justification"),
            0,
        );
    }
    let short = ["good", "ok", "A", "b better", "same", "idk", "B!!", "tie"];
    for k in 0..90 {
        let w = workers[rng.gen_range(0..65)].clone();
        plant(
            &mut records,
            &mut rng,
            &w,
            short[k % short.len()].to_owned(),
            0,
        );
    }
    let originals: Vec<(String, i64)> = records[..3049]
        .iter()
        .map(|r| {
            (
                r.justification.clone(),
                (r.submitted_at - base_time()).num_seconds(),
            )
        })
        .collect();
    let mut sources: Vec<usize> = (0..3049).collect();
    sources.shuffle(&mut rng);
    for &src in &sources[..97] {
        let w = workers[rng.gen_range(0..65)].clone();
        let (text, at) = originals[src].clone();
        plant(&mut records, &mut rng, &w, text, at);
    }
    for &src in &sources[97..177] {
        let w = workers[rng.gen_range(0..65)].clone();
        let (text, at) = originals[src].clone();
        let near = format!(
            "  {}!!",
            text.to_uppercase().replace(' ', "   ").replace(':', " -")
        );
        plant(&mut records, &mut rng, &w, near, at);
    }
    assert_eq!(records.len(), 3466);
    records.shuffle(&mut rng);

    let mut profiles: Vec<WorkerProfile> = workers.iter().map(|w| qualified(w)).collect();
    profiles.push(WorkerProfile {
        hit_acceptance_rate: 0.985,
        ..qualified("low-rate")
    });
    profiles.push(WorkerProfile {
        accepted_hits: 9_000,
        ..qualified("few-hits")
    });
    profiles.push(WorkerProfile {
        quiz_passed: false,
        ..qualified("no-quiz")
    });
    FilterFixture {
        records,
        profiles,
        planted,
    }
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) {
    let text: String = items
        .iter()
        .map(|x| serde_json::to_string(x).unwrap() + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}

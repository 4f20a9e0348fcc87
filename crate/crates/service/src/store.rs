//! Append-only judgment log and periodic snapshots.
//!
//! The log is JSONL, one [`LogEntry`] per line with offsets 1, 2, 3, ...
//! Snapshots are JSON files named `snapshot-<offset>.json`, written to a
//! temporary name first and renamed into place.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use judgeboard_core::ingest::{FilterReport, RemovalReason};
use judgeboard_core::rating::RatingConfig;
use judgeboard_core::schedule::ComparisonHistory;
use judgeboard_core::{JudgmentRecord, TaskBoard};
use serde::{Deserialize, Serialize};

pub const LOG_FILE: &str = "events.jsonl";
const SNAPSHOT_PREFIX: &str = "snapshot-";
const SNAPSHOTS_KEPT: usize = 2;

/// Verdict reached when a record was submitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum Disposition {
    Accepted,
    Removed(RemovalReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub offset: u64,
    pub record: JudgmentRecord,
    pub disposition: Disposition,
}

impl LogEntry {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log entries always serialize")
    }
}

/// Derived state as of `offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub offset: u64,
    /// Parameters the board was rated with; a snapshot taken under other
    /// parameters is ignored on recovery.
    pub rating: RatingConfig,
    pub board: TaskBoard,
    pub history: ComparisonHistory,
    pub report: FilterReport,
}

/// Where the engine persists entries and snapshots.
pub trait Storage: Send + Sync {
    /// Appends one line. On error nothing of the line may remain.
    fn append(&mut self, line: &str) -> io::Result<()>;
    fn write_snapshot(&mut self, snapshot: &Snapshot) -> io::Result<()>;
}

/// Keeps nothing; for ephemeral engines and tests.
#[derive(Debug, Default)]
pub struct NullStorage;

impl Storage for NullStorage {
    fn append(&mut self, _line: &str) -> io::Result<()> {
        Ok(())
    }

    fn write_snapshot(&mut self, _snapshot: &Snapshot) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug)]
pub struct FileStorage {
    dir: PathBuf,
    log: File,
    len: u64,
    fsync: bool,
}

impl FileStorage {
    /// Opens the log for appending; `len` must be the length of its valid prefix.
    fn open(dir: &Path, len: u64, fsync: bool) -> io::Result<Self> {
        let log = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .write(true)
            .open(dir.join(LOG_FILE))?;
        log.set_len(len)?;
        Ok(Self {
            dir: dir.to_owned(),
            log,
            len,
            fsync,
        })
    }

    fn snapshot_path(&self, offset: u64) -> PathBuf {
        self.dir.join(format!("{SNAPSHOT_PREFIX}{offset:012}.json"))
    }
}

impl Storage for FileStorage {
    fn append(&mut self, line: &str) -> io::Result<()> {
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        let result = self
            .log
            .seek(SeekFrom::Start(self.len))
            .and_then(|_| self.log.write_all(&buf))
            .and_then(|_| {
                if self.fsync {
                    self.log.sync_data()
                } else {
                    Ok(())
                }
            });
        match result {
            Ok(()) => {
                self.len += buf.len() as u64;
                Ok(())
            }
            Err(e) => {
                // best effort: drop whatever part of the line made it out
                let _ = self.log.set_len(self.len);
                Err(e)
            }
        }
    }

    fn write_snapshot(&mut self, snapshot: &Snapshot) -> io::Result<()> {
        let body = serde_json::to_vec(snapshot).map_err(io::Error::other)?;
        let path = self.snapshot_path(snapshot.offset);
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&body)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        let mut old = list_snapshots(&self.dir)?;
        old.sort();
        let excess = old.len().saturating_sub(SNAPSHOTS_KEPT);
        for (_, p) in old.into_iter().take(excess) {
            let _ = fs::remove_file(p);
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecoveryError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt log at line {line}: {detail}")]
    Corrupt { line: usize, detail: String },
}

/// What recovery found on disk.
#[derive(Debug)]
pub struct Recovered {
    pub entries: Vec<LogEntry>,
    /// Latest readable snapshot not ahead of the log.
    pub snapshot: Option<Snapshot>,
    /// Bytes cut from an incomplete last line.
    pub truncated_bytes: u64,
    pub storage: FileStorage,
}

fn list_snapshots(dir: &Path) -> io::Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(num) = name
            .strip_prefix(SNAPSHOT_PREFIX)
            .and_then(|r| r.strip_suffix(".json"))
        {
            if let Ok(offset) = num.parse() {
                out.push((offset, path));
            }
        }
    }
    Ok(out)
}

/// Reads the log and the newest usable snapshot from `dir`, creating it if needed.
///
/// An unterminated or unparsable final line is what a crash mid-append
/// leaves behind; it is cut off. Damage anywhere else is an error.
pub fn recover(dir: &Path, fsync: bool) -> Result<Recovered, RecoveryError> {
    let io_err = |path: &Path| {
        let path = path.to_owned();
        move |source| RecoveryError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let log_path = dir.join(LOG_FILE);

    let mut entries = Vec::new();
    let mut good_len = 0u64;
    let mut total_len = 0u64;
    if log_path.exists() {
        let mut reader = BufReader::new(File::open(&log_path).map_err(io_err(&log_path))?);
        let mut line = Vec::new();
        let mut pending: Option<(usize, String)> = None;
        let mut n = 0usize;
        loop {
            line.clear();
            let read = reader
                .read_until(b'\n', &mut line)
                .map_err(io_err(&log_path))?;
            if read == 0 {
                break;
            }
            n += 1;
            total_len += read as u64;
            if let Some((at, detail)) = pending.take() {
                return Err(RecoveryError::Corrupt { line: at, detail });
            }
            if line.last() != Some(&b'\n') {
                pending = Some((n, "unterminated line".into()));
                continue;
            }
            match serde_json::from_slice::<LogEntry>(&line) {
                Ok(entry) => {
                    let expected = entries.len() as u64 + 1;
                    if entry.offset != expected {
                        return Err(RecoveryError::Corrupt {
                            line: n,
                            detail: format!(
                                "offset {} where {expected} was expected",
                                entry.offset
                            ),
                        });
                    }
                    entries.push(entry);
                    good_len = total_len;
                }
                Err(e) => pending = Some((n, e.to_string())),
            }
        }
    }

    let mut snaps = list_snapshots(dir).map_err(io_err(dir))?;
    snaps.sort();
    let mut snapshot = None;
    for (offset, path) in snaps.into_iter().rev() {
        if offset > entries.len() as u64 {
            continue;
        }
        let parsed = fs::read(&path)
            .ok()
            .and_then(|b| serde_json::from_slice::<Snapshot>(&b).ok())
            .filter(|s| s.offset == offset);
        if let Some(s) = parsed {
            snapshot = Some(s);
            break;
        }
        tracing::warn!(path = %path.display(), "skipping unreadable snapshot");
    }

    let storage = FileStorage::open(dir, good_len, fsync).map_err(io_err(&log_path))?;
    Ok(Recovered {
        entries,
        snapshot,
        truncated_bytes: total_len - good_len,
        storage,
    })
}

//! Platform state rebuilt from a snapshot plus the event log tail.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use lexgap_core::platform::{Command, CommandOutput, Platform, PlatformError};
use serde::{Deserialize, Serialize};

use crate::log::{EventLog, EventRecord, LogError};

pub const LOG_FILE: &str = "events.log";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad snapshot: {0}")]
    BadSnapshot(String),
    #[error("snapshot is at event {snapshot} but the log ends at {log}")]
    SnapshotAhead { snapshot: u64, log: u64 },
    #[error("event {seq} does not replay: {error}")]
    Replay { seq: u64, error: PlatformError },
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error("persisting event failed: {0}")]
    Store(#[from] StoreError),
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    platform: Platform,
}

/// What opening the store found on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovery {
    pub snapshot_seq: Option<u64>,
    pub replayed: usize,
    /// Sequence number of the first record lost to a damaged tail.
    pub corrupt_at: Option<u64>,
}

pub struct Store {
    dir: PathBuf,
    platform: Platform,
    log: EventLog,
}

fn load_snapshot(path: &Path) -> Result<Option<Snapshot>, StoreError> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| StoreError::BadSnapshot(e.to_string())),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn replay(base: Platform, records: &[EventRecord], after: u64) -> Result<(Platform, usize), StoreError> {
    let mut platform = base;
    let mut n = 0;
    for r in records.iter().filter(|r| r.seq > after) {
        platform
            .apply(&r.command)
            .map_err(|error| StoreError::Replay { seq: r.seq, error })?;
        n += 1;
    }
    Ok((platform, n))
}

impl Store {
    pub fn open(dir: &Path) -> Result<(Self, Recovery), StoreError> {
        fs::create_dir_all(dir)?;
        let snapshot = load_snapshot(&dir.join(SNAPSHOT_FILE))?;
        let (log, records, corrupt_at) = EventLog::open(&dir.join(LOG_FILE))?;
        let last = log.next_seq() - 1;
        let (base, after) = match snapshot {
            Some(s) if s.seq > last => {
                return Err(StoreError::SnapshotAhead {
                    snapshot: s.seq,
                    log: last,
                })
            }
            Some(s) => (s.platform, s.seq),
            None => (Platform::new(), 0),
        };
        let snapshot_seq = (after > 0).then_some(after);
        let (platform, replayed) = replay(base, &records, after)?;
        let store = Self {
            dir: dir.to_path_buf(),
            platform,
            log,
        };
        Ok((
            store,
            Recovery {
                snapshot_seq,
                replayed,
                corrupt_at,
            },
        ))
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Sequence number of the last stored event, 0 when empty.
    pub fn last_seq(&self) -> u64 {
        self.log.next_seq() - 1
    }

    /// Applies a command and appends it to the log. Failed commands are
    /// not logged.
    pub fn execute(&mut self, command: Command, at_ms: u64) -> Result<CommandOutput, ExecError> {
        let out = self.platform.apply(&command)?;
        if let Err(e) = self.log.append(at_ms, command) {
            // the in-memory state is ahead of the log; fall back to disk
            if let Ok((fresh, _)) = Store::open(&self.dir) {
                *self = fresh;
            }
            return Err(StoreError::from(e).into());
        }
        Ok(out)
    }

    /// Writes the current state as the snapshot, atomically.
    pub fn snapshot(&self) -> Result<u64, StoreError> {
        let seq = self.last_seq();
        let snap = Snapshot {
            seq,
            platform: self.platform.clone(),
        };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec(&snap).expect("platform serializes"))?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        Ok(seq)
    }
}

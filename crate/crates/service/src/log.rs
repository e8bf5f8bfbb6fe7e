//! Append-only event log.
//!
//! Each record is framed as a little-endian `u32` payload length, a
//! little-endian `u32` CRC-32 of the payload, then the JSON payload.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use lexgap_core::platform::Command;
use serde::{Deserialize, Serialize};

const HEADER: usize = 8;
/// Upper bound on one record; anything larger is treated as corruption.
const MAX_RECORD: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub at_ms: u64,
    pub command: Command,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("event log is corrupt at record {seq} (byte {offset})")]
    CorruptLog { seq: u64, offset: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Result of scanning a log file.
#[derive(Debug)]
pub struct Scan {
    pub records: Vec<EventRecord>,
    /// Byte length of the valid prefix.
    pub valid_len: u64,
    /// Set when the file continues past the valid prefix.
    pub corrupt_at: Option<u64>,
}

fn encode(record: &EventRecord) -> Vec<u8> {
    let payload = serde_json::to_vec(record).expect("event records serialize");
    let mut frame = Vec::with_capacity(HEADER + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    frame.extend_from_slice(&payload);
    frame
}

/// Reads every intact record, stopping at the first bad frame.
pub fn scan(bytes: &[u8]) -> Scan {
    let mut records: Vec<EventRecord> = Vec::new();
    let mut pos = 0usize;
    let corrupt = loop {
        if pos == bytes.len() {
            break false;
        }
        let Some(header) = bytes.get(pos..pos + HEADER) else {
            break true;
        };
        let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(header[4..].try_into().unwrap());
        if len > MAX_RECORD {
            break true;
        }
        let Some(payload) = bytes.get(pos + HEADER..pos + HEADER + len) else {
            break true;
        };
        if crc32fast::hash(payload) != crc {
            break true;
        }
        let Ok(record) = serde_json::from_slice::<EventRecord>(payload) else {
            break true;
        };
        if records.last().is_some_and(|last| record.seq <= last.seq) {
            break true;
        }
        records.push(record);
        pos += HEADER + len;
    };
    let next_seq = records.last().map_or(1, |r| r.seq + 1);
    Scan {
        records,
        valid_len: pos as u64,
        corrupt_at: corrupt.then_some(next_seq),
    }
}

/// Reads a whole log, failing on any corruption.
pub fn read_log(path: &Path) -> Result<Vec<EventRecord>, LogError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let s = scan(&bytes);
    match s.corrupt_at {
        Some(seq) => Err(LogError::CorruptLog {
            seq,
            offset: s.valid_len,
        }),
        None => Ok(s.records),
    }
}

pub struct EventLog {
    path: PathBuf,
    writer: BufWriter<File>,
    next_seq: u64,
}

impl EventLog {
    /// Opens (or creates) the log. A damaged tail is cut off and reported
    /// as the sequence number of the first lost record.
    pub fn open(path: &Path) -> Result<(Self, Vec<EventRecord>, Option<u64>), LogError> {
        let mut file = OpenOptions::new().read(true).append(false).write(true).create(true).truncate(false).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let s = scan(&bytes);
        if s.corrupt_at.is_some() {
            file.set_len(s.valid_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::Start(s.valid_len))?;
        let next_seq = s.records.last().map_or(1, |r| r.seq + 1);
        let log = Self {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
            next_seq,
        };
        Ok((log, s.records, s.corrupt_at))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Appends and flushes one record, returning it.
    pub fn append(&mut self, at_ms: u64, command: Command) -> Result<EventRecord, LogError> {
        let record = EventRecord {
            seq: self.next_seq,
            at_ms,
            command,
        };
        self.writer.write_all(&encode(&record))?;
        self.writer.flush()?;
        self.writer.get_ref().sync_data()?;
        self.next_seq += 1;
        Ok(record)
    }
}

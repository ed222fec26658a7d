//! Append-only, hash-chained audit log.
//!
//! Each line is a JSON object `{"seq", "prev", "event", "hash"}` where
//! `hash` is the hex SHA-256 of `prev`, a newline, `seq`, a newline and
//! the compact JSON of `event`. The first entry has `prev` equal to 64
//! zeros and carries the `Init` event. Replaying the events against the
//! same CVR file reproduces the audit state exactly.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assertion::AssertionSet;
use crate::audit::assorter::MvrRecord;
use crate::audit::engine::{Audit, AuditSpec};
use crate::audit::sampling::Draw;
use crate::cvr::parse_canonical;
use crate::error::{Error, Result};

pub const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Init {
        spec: AuditSpec,
        contest_id: String,
        cvr_sha256: String,
        assertions: String,
    },
    Draw {
        draws: Vec<Draw>,
    },
    Mvr {
        records: Vec<MvrRecord>,
    },
    SecondEntry {
        record: MvrRecord,
        matches: bool,
    },
    Escalate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub prev: String,
    pub event: Event,
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn chain_hash(prev: &str, seq: u64, event: &Event) -> Result<String> {
    let body = serde_json::to_string(event).map_err(|e| Error::Log(e.to_string()))?;
    Ok(sha256_hex(format!("{prev}\n{seq}\n{body}").as_bytes()))
}

/// Checks sequence numbers and the hash chain.
pub fn verify_chain(entries: &[LogEntry]) -> Result<()> {
    let mut prev = GENESIS.to_string();
    for (i, e) in entries.iter().enumerate() {
        if e.seq != i as u64 {
            return Err(Error::Log(format!("entry {i} has sequence number {}", e.seq)));
        }
        if e.prev != prev {
            return Err(Error::Log(format!("entry {i} does not link to its predecessor")));
        }
        if chain_hash(&e.prev, e.seq, &e.event)? != e.hash {
            return Err(Error::Log(format!("entry {i} hash does not match its content")));
        }
        if (i == 0) != matches!(e.event, Event::Init { .. }) {
            return Err(Error::Log(format!("entry {i}: only the first entry may initialize")));
        }
        prev = e.hash.clone();
    }
    if entries.is_empty() {
        return Err(Error::Log("log is empty".into()));
    }
    Ok(())
}

pub struct AuditLog {
    path: PathBuf,
    file: File,
    last_hash: String,
    next_seq: u64,
}

impl AuditLog {
    /// Creates a new log holding only `init`. Fails if the file exists.
    pub fn create(path: &Path, init: Event) -> Result<AuditLog> {
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut log = AuditLog {
            path: path.to_path_buf(),
            file,
            last_hash: GENESIS.to_string(),
            next_seq: 0,
        };
        log.append(init)?;
        Ok(log)
    }

    /// Opens an existing log after checking its chain.
    pub fn open(path: &Path) -> Result<(AuditLog, Vec<LogEntry>)> {
        let entries = read_log(path)?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let last = entries.last().expect("verified logs are non-empty");
        Ok((
            AuditLog {
                path: path.to_path_buf(),
                file,
                last_hash: last.hash.clone(),
                next_seq: last.seq + 1,
            },
            entries,
        ))
    }

    /// Writes and syncs one event.
    pub fn append(&mut self, event: Event) -> Result<LogEntry> {
        let entry = LogEntry {
            seq: self.next_seq,
            prev: self.last_hash.clone(),
            hash: chain_hash(&self.last_hash, self.next_seq, &event)?,
            event,
        };
        let mut line = serde_json::to_string(&entry).map_err(|e| Error::Log(e.to_string()))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))?;
        self.last_hash = entry.hash.clone();
        self.next_seq += 1;
        Ok(entry)
    }

    pub fn last_hash(&self) -> &str {
        &self.last_hash
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(&line).map_err(|e| Error::Log(format!("line {}: {e}", i + 1)))?;
        entries.push(entry);
    }
    verify_chain(&entries)?;
    Ok(entries)
}

/// Rebuilds an audit from its events and the canonical CVR text.
pub fn replay(entries: &[LogEntry], cvr_text: &str) -> Result<Audit> {
    verify_chain(entries)?;
    let Event::Init {
        spec,
        contest_id,
        cvr_sha256,
        assertions,
    } = &entries[0].event
    else {
        unreachable!("verify_chain checks the first event");
    };
    if sha256_hex(cvr_text.as_bytes()) != *cvr_sha256 {
        return Err(Error::Log("CVR file does not match the digest in the log".into()));
    }
    let (contest, records) = parse_canonical(cvr_text)?;
    if contest.contest_id != *contest_id {
        return Err(Error::Log(format!(
            "log is for contest {contest_id:?}, CVR file for {:?}",
            contest.contest_id
        )));
    }
    let set = AssertionSet::parse(assertions, &contest)?;
    let mut audit = Audit::new(spec.clone(), contest, records, set)?;
    for entry in &entries[1..] {
        match &entry.event {
            Event::Init { .. } => unreachable!("verify_chain rejects a second init"),
            Event::Draw { draws } => {
                let redrawn = audit.draw(draws.len() as u64)?;
                if redrawn != *draws {
                    return Err(Error::Log(format!("entry {}: draws do not reproduce", entry.seq)));
                }
            }
            Event::Mvr { records } => audit.enter(records)?,
            Event::SecondEntry { record, matches } => {
                if audit.second_entry(record)? != *matches {
                    return Err(Error::Log(format!("entry {}: second-entry result differs", entry.seq)));
                }
            }
            Event::Escalate => audit.escalate()?,
        }
    }
    Ok(audit)
}

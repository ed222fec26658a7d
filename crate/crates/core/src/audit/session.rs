//! An audit persisted in a directory: `cvr.txt`, `assertions.txt` and the
//! event log `audit.log`. Every change is written to the log before it is
//! applied in memory, and opening a session replays the log.

use std::path::{Path, PathBuf};

use crate::assertion::AssertionSet;
use crate::audit::assorter::MvrRecord;
use crate::audit::engine::{Audit, AuditSpec, AuditStatus};
use crate::audit::estimate::SampleSize;
use crate::audit::log::{read_log, replay, sha256_hex, AuditLog, Event, GENESIS};
use crate::audit::sampling::Draw;
use crate::cvr::parse_canonical;
use crate::error::{Error, Result};

pub const CVR_FILE: &str = "cvr.txt";
pub const ASSERTION_FILE: &str = "assertions.txt";
pub const LOG_FILE: &str = "audit.log";

pub struct Session {
    id: String,
    dir: PathBuf,
    log: AuditLog,
    audit: Audit,
}

/// Audit id: the first 16 hex digits of the initializing log entry's hash.
fn session_id(init: &Event) -> Result<String> {
    let body = serde_json::to_string(init).map_err(|e| Error::Log(e.to_string()))?;
    Ok(sha256_hex(format!("{GENESIS}\n0\n{body}").as_bytes())[..16].to_string())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl Session {
    /// Validates the inputs, persists a new session under `root` and draws
    /// the initial sample. `initial_draws` defaults to the planning
    /// estimate. Starting the same audit twice reopens the first one.
    pub fn create(
        root: &Path,
        spec: AuditSpec,
        cvr_text: &str,
        assertion_text: &str,
        initial_draws: Option<u64>,
    ) -> Result<Session> {
        let (contest, records) = parse_canonical(cvr_text)?;
        let set = AssertionSet::parse(assertion_text, &contest)?;
        let init = Event::Init {
            spec: spec.clone(),
            contest_id: contest.contest_id.clone(),
            cvr_sha256: sha256_hex(cvr_text.as_bytes()),
            assertions: assertion_text.to_string(),
        };
        let audit = Audit::new(spec, contest, records, set)?;
        let id = session_id(&init)?;
        let dir = root.join(&id);
        if dir.join(LOG_FILE).exists() {
            return Session::open(&dir);
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write(&dir.join(CVR_FILE), cvr_text)?;
        write(&dir.join(ASSERTION_FILE), assertion_text)?;
        let log = AuditLog::create(&dir.join(LOG_FILE), init)?;
        let mut session = Session { id, dir, log, audit };
        let count = match initial_draws {
            Some(n) => n,
            None => session.initial_estimate()?,
        };
        if count > 0 {
            session.draw(count)?;
        }
        Ok(session)
    }

    /// Largest attainable per-assertion estimate, at least one draw.
    fn initial_estimate(&self) -> Result<u64> {
        Ok(self
            .audit
            .initial_estimates()?
            .into_iter()
            .filter_map(SampleSize::draws)
            .fold(1, u64::max))
    }

    /// Ids of the sessions stored under `root`, sorted.
    pub fn list(root: &Path) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        let dir = match std::fs::read_dir(root) {
            Ok(d) => d,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ids),
            Err(e) => return Err(Error::io(root, e)),
        };
        for entry in dir {
            let path = entry.map_err(|e| Error::io(root, e))?.path();
            if path.join(LOG_FILE).is_file() {
                if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn open(dir: &Path) -> Result<Session> {
        let cvr_path = dir.join(CVR_FILE);
        let cvr_text = std::fs::read_to_string(&cvr_path).map_err(|e| Error::io(&cvr_path, e))?;
        let entries = read_log(&dir.join(LOG_FILE))?;
        let audit = replay(&entries, &cvr_text)?;
        let id = entries[0].hash[..16].to_string();
        let (log, _) = AuditLog::open(&dir.join(LOG_FILE))?;
        Ok(Session {
            id,
            dir: dir.to_path_buf(),
            log,
            audit,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hash of the latest log entry.
    pub fn log_head(&self) -> &str {
        self.log.last_hash()
    }

    pub fn audit(&self) -> &Audit {
        &self.audit
    }

    pub fn draw(&mut self, count: u64) -> Result<Vec<Draw>> {
        let draws = self.audit.preview_draws(count)?;
        self.log.append(Event::Draw { draws: draws.clone() })?;
        self.audit.draw(count)
    }

    pub fn enter(&mut self, records: Vec<MvrRecord>) -> Result<()> {
        self.audit.check_entries(&records)?;
        self.log.append(Event::Mvr {
            records: records.clone(),
        })?;
        self.audit.enter(&records)
    }

    pub fn second_entry(&mut self, record: MvrRecord) -> Result<bool> {
        self.audit.check_second_entry(&record)?;
        let matches = self.audit.state().entries.get(&record.ballot_id) == Some(&record.reading);
        self.log.append(Event::SecondEntry {
            record: record.clone(),
            matches,
        })?;
        self.audit.second_entry(&record)
    }

    pub fn escalate(&mut self) -> Result<()> {
        if self.audit.status() == AuditStatus::Confirmed {
            return Err(Error::Domain("audit is already confirmed".into()));
        }
        self.log.append(Event::Escalate)?;
        self.audit.escalate()
    }
}

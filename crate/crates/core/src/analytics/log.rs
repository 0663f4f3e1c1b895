//! Append-only session transcript.
//!
//! A log file is JSON Lines: one header line, then one record per generation.
//! Record `k` holds generation `k`, the ballot (applied to generation `k - 1`)
//! that produced it, the evolution state after that ballot and the chart data
//! for that iteration. Record 0 has no ballot.
//!
//! Every append rewrites the log into a temporary file next to the target and
//! renames it into place, so a reader sees either the previous or the new
//! contents, never a partial record.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::stats::IterationStats;
use super::AnalyticsError;
use crate::genetics::{Ballot, EvolutionParams, EvolutionState, Generation, IterationSnapshot};
use crate::guideline::AttributeSchema;

pub const LOG_FORMAT: &str = "promptsteer-session";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub format: String,
    pub version: u32,
    pub session_id: String,
    pub schema: AttributeSchema,
    pub params: EvolutionParams,
    pub master_seed: u64,
    /// Opaque settings of the driving application (backend, canvas size).
    #[serde(default)]
    pub settings: BTreeMap<String, serde_json::Value>,
}

impl SessionHeader {
    pub fn new(
        session_id: impl Into<String>,
        schema: AttributeSchema,
        params: EvolutionParams,
        master_seed: u64,
    ) -> Self {
        SessionHeader {
            format: LOG_FORMAT.to_string(),
            version: LOG_VERSION,
            session_id: session_id.into(),
            schema,
            params,
            master_seed,
            settings: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotEntry {
    /// Client idempotency key.
    pub nonce: Option<String>,
    pub votes: Ballot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub index: u64,
    pub ballot: Option<BallotEntry>,
    pub generation: Generation,
    /// State after the ballot, without history.
    pub state: EvolutionState,
    pub stats: IterationStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    header: SessionHeader,
    records: Vec<LogRecord>,
}

pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionLog {
    pub fn new(header: SessionHeader) -> Self {
        SessionLog {
            header,
            records: Vec::new(),
        }
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&LogRecord> {
        self.records.last()
    }

    fn check_next(&self, record: &LogRecord) -> Result<(), AnalyticsError> {
        let expected = self.records.last().map_or(0, |r| r.index + 1);
        if record.index != expected {
            return Err(AnalyticsError::OutOfOrder {
                expected,
                found: record.index,
            });
        }
        if record.generation.index != record.index {
            return Err(AnalyticsError::Corrupt(format!(
                "record {} carries generation {}",
                record.index, record.generation.index
            )));
        }
        if (record.index == 0) != record.ballot.is_none() {
            return Err(AnalyticsError::Corrupt(format!(
                "record {} ballot presence is wrong",
                record.index
            )));
        }
        Ok(())
    }

    /// In-memory append; the index must be exactly one past the last record.
    pub fn append(&mut self, record: LogRecord) -> Result<(), AnalyticsError> {
        self.check_next(&record)?;
        self.records.push(record);
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses a log. A trailing line without its newline terminator is an
    /// uncommitted write and is ignored.
    pub fn from_jsonl(text: &str) -> Result<Self, AnalyticsError> {
        let committed = match text.rfind('\n') {
            Some(end) => &text[..=end],
            None => "",
        };
        let mut lines = committed.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| AnalyticsError::Corrupt("missing header".into()))?;
        let header: SessionHeader = serde_json::from_str(header_line)
            .map_err(|e| AnalyticsError::Corrupt(format!("header: {e}")))?;
        if header.format != LOG_FORMAT || header.version != LOG_VERSION {
            return Err(AnalyticsError::Corrupt(format!(
                "unsupported log format {} v{}",
                header.format, header.version
            )));
        }
        let mut log = SessionLog::new(header);
        for (n, line) in lines.enumerate() {
            let record: LogRecord = serde_json::from_str(line)
                .map_err(|e| AnalyticsError::Corrupt(format!("record line {}: {e}", n + 2)))?;
            log.append(record)?;
        }
        Ok(log)
    }

    /// Evolution state after the last record, with its per-iteration history.
    pub fn current_state(&self) -> Option<EvolutionState> {
        let mut state = self.records.last()?.state.snapshot();
        state.history = self
            .records
            .windows(2)
            .map(|w| {
                Arc::new(IterationSnapshot {
                    iteration: w[0].index,
                    weights: w[1].state.weights.clone(),
                    continuous_models: w[1].state.continuous_models.clone(),
                    ballot: w[1]
                        .ballot
                        .as_ref()
                        .expect("checked on append")
                        .votes
                        .iter()
                        .filter(|(_, v)| **v > 0)
                        .map(|(k, v)| (k.clone(), *v))
                        .collect(),
                })
            })
            .collect();
        Some(state)
    }

    /// Recomputes every state snapshot from the stored generations and ballots.
    pub fn verify_replay(&self) -> Result<(), AnalyticsError> {
        let schema = &self.header.schema;
        let mut state = EvolutionState::new(schema);
        for (k, record) in self.records.iter().enumerate() {
            if k > 0 {
                let ballot = &record.ballot.as_ref().expect("checked on append").votes;
                let voted = self.records[k - 1]
                    .generation
                    .apply_ballot(ballot)
                    .map_err(|_| AnalyticsError::ReplayMismatch {
                        index: record.index,
                    })?;
                state = state.update_weights(&voted).update_continuous(&voted);
            }
            if state.snapshot() != record.state.snapshot() {
                return Err(AnalyticsError::ReplayMismatch {
                    index: record.index,
                });
            }
        }
        Ok(())
    }
}

/// Directory of session logs, one `<session id>.jsonl` file per session.
#[derive(Debug, Clone)]
pub struct LogStore {
    dir: PathBuf,
}

impl LogStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, AnalyticsError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| AnalyticsError::Storage(e.to_string()))?;
        Ok(LogStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, session_id: &str) -> Result<PathBuf, AnalyticsError> {
        if !valid_session_id(session_id) {
            return Err(AnalyticsError::InvalidSessionId(session_id.to_string()));
        }
        Ok(self.dir.join(format!("{session_id}.jsonl")))
    }

    pub fn exists(&self, session_id: &str) -> bool {
        self.path_for(session_id).is_ok_and(|p| p.exists())
    }

    pub fn load(&self, session_id: &str) -> Result<SessionLog, AnalyticsError> {
        let path = self.path_for(session_id)?;
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => AnalyticsError::NotFound(session_id.to_string()),
            _ => AnalyticsError::Storage(e.to_string()),
        })?;
        SessionLog::from_jsonl(&text)
    }

    /// Writes `log` durably, replacing any previous version of the file.
    pub fn commit(&self, log: &SessionLog) -> Result<(), AnalyticsError> {
        self.commit_inner(log, None)
    }

    /// Appends `record` to `log` and commits. On failure `log` is unchanged.
    pub fn append(&self, log: &mut SessionLog, record: LogRecord) -> Result<(), AnalyticsError> {
        log.check_next(&record)?;
        log.records.push(record);
        if let Err(e) = self.commit(log) {
            log.records.pop();
            return Err(e);
        }
        Ok(())
    }

    fn commit_inner(&self, log: &SessionLog, fault: Option<Fault>) -> Result<(), AnalyticsError> {
        let storage = |e: std::io::Error| AnalyticsError::Storage(e.to_string());
        let path = self.path_for(&log.header.session_id)?;
        let tmp = path.with_extension("jsonl.tmp");
        let body = log.to_jsonl();
        {
            let mut f = fs::File::create(&tmp).map_err(storage)?;
            if fault == Some(Fault::TornWrite) {
                f.write_all(&body.as_bytes()[..body.len() / 2])
                    .map_err(storage)?;
                return Err(AnalyticsError::Storage("injected crash mid-write".into()));
            }
            f.write_all(body.as_bytes()).map_err(storage)?;
            f.sync_all().map_err(storage)?;
        }
        if fault == Some(Fault::BeforeRename) {
            return Err(AnalyticsError::Storage(
                "injected crash before rename".into(),
            ));
        }
        fs::rename(&tmp, &path).map_err(storage)?;
        if let Ok(d) = fs::File::open(&self.dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fault {
    #[allow(dead_code)]
    TornWrite,
    #[allow(dead_code)]
    BeforeRename,
}

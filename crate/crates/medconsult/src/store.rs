//! Append-only JSONL persistence of sessions and regeneration traces.
//!
//! Layout under the data directory:
//! `sessions/<id>.jsonl` holds one event per line (creation, then one line
//! per completed turn); `traces/<id>.jsonl` holds one trace per turn, in turn
//! order, so `<id>-t<n>` is line n.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use medconsult_core::eicl::{Demonstration, RegenerationTrace};
use medconsult_core::pipeline::{DialogueSession, Turn, TurnResult};
use medconsult_core::terminology::TermSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::read_jsonl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum SessionEvent {
    Created { session_id: String, timestamp: u64 },
    Turn {
        patient: Turn,
        doctor: Turn,
        result: TurnResult,
        term_memory: TermSet,
        demo_memory: Vec<Demonstration>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub trace_id: String,
    pub trace: RegenerationTrace,
}

/// Session ids become file names, so they are restricted to ASCII
/// alphanumerics, `-` and `_`.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Splits `<session>-t<n>`.
pub fn parse_trace_id(trace_id: &str) -> Option<(&str, usize)> {
    let (sid, n) = trace_id.rsplit_once("-t")?;
    Some((sid, n.parse().ok()?))
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

fn append(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut line = serde_json::to_string(value).map_err(|e| Error::Storage(e.to_string()))?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["sessions", "traces"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(SessionStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.jsonl"))
    }

    fn trace_path(&self, id: &str) -> PathBuf {
        self.root.join("traces").join(format!("{id}.jsonl"))
    }

    pub fn create(&self, session_id: &str, timestamp: u64) -> Result<()> {
        if !valid_session_id(session_id) {
            return Err(Error::Storage(format!("invalid session id `{session_id}`")));
        }
        let path = self.session_path(session_id);
        if path.exists() {
            return Err(Error::Storage(format!("session `{session_id}` already exists")));
        }
        append(&path, &SessionEvent::Created { session_id: session_id.into(), timestamp })
    }

    /// Records the latest turn of `session` and its trace. The trace is
    /// written first so a persisted turn always has its trace.
    pub fn record_turn(&self, session: &DialogueSession, trace: &RegenerationTrace) -> Result<()> {
        let (result, pair) = match (session.results.last(), session.turns.len()) {
            (Some(r), n) if n >= 2 => (r, &session.turns[n - 2..]),
            _ => return Err(Error::Storage("session has no completed turn".into())),
        };
        append(&self.trace_path(&session.session_id), &TraceRecord { trace_id: result.trace_id.clone(), trace: trace.clone() })?;
        append(
            &self.session_path(&session.session_id),
            &SessionEvent::Turn {
                patient: pair[0].clone(),
                doctor: pair[1].clone(),
                result: result.clone(),
                term_memory: session.term_memory.clone(),
                demo_memory: session.demo_memory.clone(),
            },
        )
    }

    pub fn load_session(&self, session_id: &str) -> Result<DialogueSession> {
        let path = self.session_path(session_id);
        if !valid_session_id(session_id) || !path.exists() {
            return Err(Error::UnknownSession(session_id.into()));
        }
        let mut session: Option<DialogueSession> = None;
        for (line, event) in read_jsonl::<SessionEvent>(&path)? {
            match (event, session.as_mut()) {
                (SessionEvent::Created { session_id, .. }, None) => session = Some(DialogueSession::new(session_id)),
                (SessionEvent::Turn { patient, doctor, result, term_memory, demo_memory }, Some(s)) => {
                    s.turns.push(patient);
                    s.turns.push(doctor);
                    s.sentiment_history.push(result.feedback.clone());
                    s.results.push(result);
                    s.term_memory = term_memory;
                    s.demo_memory = demo_memory;
                }
                _ => return Err(Error::parse(&path, line, "event out of order")),
            }
        }
        session.ok_or_else(|| Error::parse(&path, 1, "missing creation event"))
    }

    /// Every persisted session, ordered by id.
    pub fn load_all(&self) -> Result<Vec<DialogueSession>> {
        let dir = self.root.join("sessions");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".jsonl") {
                ids.push(id.to_owned());
            }
        }
        ids.sort();
        ids.iter().map(|id| self.load_session(id)).collect()
    }

    pub fn load_traces(&self, session_id: &str) -> Result<Vec<TraceRecord>> {
        let path = self.trace_path(session_id);
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(read_jsonl(&path)?.into_iter().map(|(_, t)| t).collect())
    }

    pub fn load_trace(&self, trace_id: &str) -> Result<RegenerationTrace> {
        let (sid, n) = parse_trace_id(trace_id).ok_or_else(|| Error::UnknownTrace(trace_id.into()))?;
        if !valid_session_id(sid) {
            return Err(Error::UnknownTrace(trace_id.into()));
        }
        self.load_traces(sid)?
            .into_iter()
            .nth(n)
            .filter(|t| t.trace_id == trace_id)
            .map(|t| t.trace)
            .ok_or_else(|| Error::UnknownTrace(trace_id.into()))
    }
}

//! Consultation service: sessions, index administration and evaluation,
//! independent of the HTTP transport.
//!
//! Each session sits behind its own mutex, so messages to one session are
//! serialized while different sessions run in parallel. The knowledge base is
//! an immutable snapshot behind an `Arc`; rebuilding swaps the pointer, and
//! turns already running keep the snapshot they started with.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use medconsult_core::eicl::{Demonstration, RegenerationTrace};
use medconsult_core::genbackend::{Generator, HealthStatus, ScriptedBackend};
use medconsult_core::metrics::MetricReport;
use medconsult_core::pipeline::{run_turn, DialogueSession, EngineConfig, KnowledgeBase, Turn, TurnResult};
use medconsult_core::sentiment::FeedbackModel;
use medconsult_core::terminology::TermSet;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, IdSource, SequentialIds, SystemClock, UuidIds};
use crate::config::{BackendKind, Config, IdScheme};
use crate::error::{Error, Result};
use crate::eval::evaluate_rows;
use crate::formats::{self, TextRow};
use crate::index_store::{self, IndexSummary};
use crate::pii::PiiFilter;
use crate::remote::RemoteBackend;
use crate::store::SessionStore;

/// What clients see of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub turns: Vec<Turn>,
    pub results: Vec<TurnResult>,
    pub term_memory: TermSet,
}

impl From<&DialogueSession> for Transcript {
    fn from(s: &DialogueSession) -> Self {
        Transcript {
            session_id: s.session_id.clone(),
            turns: s.turns.clone(),
            results: s.results.clone(),
            term_memory: s.term_memory.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub backend_id: String,
    pub backend: HealthStatus,
    pub index: IndexSummary,
    pub sessions: usize,
}

struct Snapshot {
    kb: Arc<KnowledgeBase>,
    summary: IndexSummary,
}

pub struct ServiceParts {
    pub kb: KnowledgeBase,
    pub backend: Arc<dyn Generator>,
    pub model: FeedbackModel,
    pub engine: EngineConfig,
    pub shared_demos: Vec<Demonstration>,
    pub store: Option<SessionStore>,
    pub clock: Arc<dyn Clock>,
    pub ids: Arc<dyn IdSource>,
    pub pii: Option<PiiFilter>,
}

impl ServiceParts {
    /// Scripted defaults with no persistence, system clock and uuid ids.
    pub fn new(kb: KnowledgeBase, backend: Arc<dyn Generator>) -> Self {
        ServiceParts {
            kb,
            backend,
            model: FeedbackModel::seed(),
            engine: EngineConfig::default(),
            shared_demos: Vec::new(),
            store: None,
            clock: Arc::new(SystemClock),
            ids: Arc::new(UuidIds),
            pii: None,
        }
    }
}

type SessionCell = Arc<Mutex<DialogueSession>>;

pub struct Service {
    snapshot: RwLock<Arc<Snapshot>>,
    sessions: RwLock<BTreeMap<String, SessionCell>>,
    traces: Mutex<BTreeMap<String, RegenerationTrace>>,
    backend: Arc<dyn Generator>,
    model: FeedbackModel,
    engine: EngineConfig,
    shared_demos: Vec<Demonstration>,
    store: Option<SessionStore>,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
    pii: Option<PiiFilter>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Labeled consultation records as demonstrations; unlabeled records are
/// skipped.
pub fn load_demonstrations(path: &Path, pii: Option<&PiiFilter>) -> Result<Vec<Demonstration>> {
    Ok(formats::load_corpus_with(path, pii)?
        .into_iter()
        .filter_map(|r| r.feedback_sentiment.map(|s| Demonstration::new(r.query, r.response, s)))
        .collect())
}

impl Service {
    /// Builds the service, restoring persisted sessions when a store is set.
    pub fn new(parts: ServiceParts) -> Result<Self> {
        let summary = index_store::summarize(&parts.kb);
        let mut sessions = BTreeMap::new();
        if let Some(store) = &parts.store {
            for s in store.load_all()? {
                sessions.insert(s.session_id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        Ok(Service {
            snapshot: RwLock::new(Arc::new(Snapshot { kb: Arc::new(parts.kb), summary })),
            sessions: RwLock::new(sessions),
            traces: Mutex::new(BTreeMap::new()),
            backend: parts.backend,
            model: parts.model,
            engine: parts.engine,
            shared_demos: parts.shared_demos,
            store: parts.store,
            clock: parts.clock,
            ids: parts.ids,
            pii: parts.pii,
        })
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let p = &cfg.paths;
        let pii = p.pii_patterns.as_deref().map(PiiFilter::load).transpose()?;
        let kb = match (&p.index, &p.docs, &p.aliases) {
            (Some(index), _, _) => index_store::load(index)?.0,
            (None, Some(docs), Some(aliases)) => index_store::build_from_files(docs, aliases)?,
            _ => return Err(Error::Config("set paths.index, or paths.docs and paths.aliases".into())),
        };
        let backend: Arc<dyn Generator> = match cfg.backend.kind {
            BackendKind::Scripted => {
                let script = cfg.backend.script.as_deref().ok_or_else(|| Error::Config("scripted backend needs backend.script".into()))?;
                Arc::new(ScriptedBackend::new(formats::load_script(script)?)?)
            }
            BackendKind::Remote => Arc::new(RemoteBackend::new(cfg.backend.remote.clone().apply_env())?),
        };
        let mut model = formats::load_feedback_model(p.lexicon.as_deref(), p.negators.as_deref(), p.symptoms.as_deref())?;
        model.thresholds = cfg.engine.thresholds()?;
        let mut parts = ServiceParts::new(kb, backend);
        parts.model = model;
        parts.engine = cfg.engine.engine_config();
        if let Some(demos) = &p.demos {
            parts.shared_demos = load_demonstrations(demos, pii.as_ref())?;
        }
        parts.store = p.data_dir.as_deref().map(SessionStore::open).transpose()?;
        if cfg.service.ids == IdScheme::Sequential {
            parts.ids = Arc::new(SequentialIds::new("s"));
        }
        parts.pii = pii;
        Self::new(parts)
    }

    pub fn knowledge_base(&self) -> Arc<KnowledgeBase> {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).kb.clone()
    }

    pub fn index_summary(&self) -> IndexSummary {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).summary.clone()
    }

    fn session(&self, id: &str) -> Result<SessionCell> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(id.into()))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn create_session(&self) -> Result<String> {
        let mut sessions = self.sessions.write().unwrap_or_else(|p| p.into_inner());
        let id = loop {
            let id = self.ids.next_id();
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        if let Some(store) = &self.store {
            store.create(&id, self.clock.now_ms())?;
        }
        sessions.insert(id.clone(), Arc::new(Mutex::new(DialogueSession::new(id.clone()))));
        Ok(id)
    }

    /// Runs one patient message. The session and store are only updated when
    /// the whole turn succeeds.
    pub fn post_message(&self, session_id: &str, text: &str) -> Result<TurnResult> {
        let cell = self.session(session_id)?;
        let mut guard = lock(&cell);
        let kb = self.knowledge_base();
        let mut next = guard.clone();
        let out = run_turn(
            &kb,
            &mut next,
            &self.shared_demos,
            text,
            &*self.backend,
            &self.model,
            &self.engine,
            self.clock.now_ms(),
        )?;
        match &self.store {
            Some(store) => store.record_turn(&next, &out.trace)?,
            None => {
                lock(&self.traces).insert(out.result.trace_id.clone(), out.trace);
            }
        }
        *guard = next;
        Ok(out.result)
    }

    pub fn get_transcript(&self, session_id: &str) -> Result<Transcript> {
        let cell = self.session(session_id)?;
        let guard = lock(&cell);
        Ok(Transcript::from(&*guard))
    }

    pub fn get_trace(&self, trace_id: &str) -> Result<RegenerationTrace> {
        match &self.store {
            Some(store) => store.load_trace(trace_id),
            None => lock(&self.traces).get(trace_id).cloned().ok_or_else(|| Error::UnknownTrace(trace_id.into())),
        }
    }

    /// Rebuilds from document and alias files and swaps the new snapshot in.
    /// On any error the current index stays in place.
    pub fn admin_build_index(&self, docs: &Path, aliases: &Path) -> Result<IndexSummary> {
        if let Some(pii) = &self.pii {
            pii.check_file(docs)?;
        }
        let kb = index_store::build_from_files(docs, aliases)?;
        let summary = index_store::summarize(&kb);
        let snap = Arc::new(Snapshot { kb: Arc::new(kb), summary: summary.clone() });
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = snap;
        Ok(summary)
    }

    pub fn eval(&self, predictions: &[TextRow], references: &[TextRow]) -> Result<MetricReport> {
        evaluate_rows(predictions, references)
    }

    pub fn health(&self) -> Health {
        let backend = self.backend.health_check();
        Health {
            status: if backend.is_ok() { "ok".into() } else { "degraded".into() },
            backend_id: self.backend.backend_id().into(),
            backend,
            index: self.index_summary(),
            sessions: self.session_count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::StepClock;
    use medconsult_core::corpus::KnowledgeDocument;
    use medconsult_core::terminology::AliasTable;

    fn kb() -> KnowledgeBase {
        let mut aliases = AliasTable::new();
        aliases.insert("fever", "FEVER").unwrap();
        let docs = vec![
            KnowledgeDocument { id: "d1".into(), title: "Fever".into(), body: "Fever: rest and fluids.".into(), terms: vec![] },
            KnowledgeDocument { id: "d2".into(), title: "Teeth".into(), body: "Brush twice daily.".into(), terms: vec![] },
        ];
        KnowledgeBase::build(docs, &aliases).unwrap()
    }

    fn service(store: Option<SessionStore>) -> Service {
        let mut parts = ServiceParts::new(kb(), Arc::new(ScriptedBackend::new(["Rest well and drink plenty of fluids, take care."]).unwrap()));
        parts.store = store;
        parts.clock = Arc::new(StepClock::new(1000, 1));
        parts.ids = Arc::new(SequentialIds::new("s"));
        Service::new(parts).unwrap()
    }

    #[test]
    fn sessions_are_distinct_and_empty() {
        let svc = service(None);
        let a = svc.create_session().unwrap();
        let b = svc.create_session().unwrap();
        assert_ne!(a, b);
        assert!(svc.get_transcript(&a).unwrap().turns.is_empty());
    }

    #[test]
    fn message_flow_and_errors() {
        let svc = service(None);
        let id = svc.create_session().unwrap();
        let r = svc.post_message(&id, "I have a fever today").unwrap();
        assert_eq!(r.terms, ["FEVER"]);
        assert_eq!(svc.get_transcript(&id).unwrap().turns.len(), 2);
        assert_eq!(svc.get_trace(&r.trace_id).unwrap().rounds.len(), r.rounds);
        assert!(matches!(svc.post_message("nope", "hi"), Err(Error::UnknownSession(_))));
        assert!(matches!(svc.post_message(&id, "  "), Err(Error::Pipeline(_))));
        assert_eq!(svc.get_transcript(&id).unwrap().turns.len(), 2);
    }

    #[test]
    fn restart_restores_sessions() {
        let dir = tempfile::tempdir().unwrap();
        let id;
        let before;
        {
            let svc = service(Some(SessionStore::open(dir.path()).unwrap()));
            id = svc.create_session().unwrap();
            svc.post_message(&id, "I have a fever today").unwrap();
            before = svc.get_transcript(&id).unwrap();
        }
        let svc = service(Some(SessionStore::open(dir.path()).unwrap()));
        assert_eq!(svc.get_transcript(&id).unwrap(), before);
        assert!(svc.get_trace(&before.results[0].trace_id).is_ok());
        let other = svc.create_session().unwrap();
        assert_ne!(other, id);
    }
}

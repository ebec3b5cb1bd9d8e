//! One consultation turn: detect terms, grow the session memory, retrieve,
//! select demonstrations and generate with feedback-gated regeneration.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::KnowledgeDocument;
use crate::eicl::{
    generate_with_feedback, record_demonstration, select_indices, ContextEmbedding, ContextWeights,
    Demonstration, EiclError, LoopConfig, PromptDoc, PromptInputs, RegenerationTrace,
};
use crate::genbackend::Generator;
use crate::retrieval::{enhance_with, retrieve, Bm25Params, InvertedIndex, RetrievalError};
use crate::sentiment::{FeedbackModel, FeedbackPrediction};
use crate::terminology::{link_documents, session_memory_update, AliasTable, TermDetector, TermMatcher, TermSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("message is empty")]
    EmptyMessage,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Generation(#[from] EiclError),
}

/// The immutable dictionary and index shared by all sessions.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    index: InvertedIndex,
    dictionary: TermSet,
    matcher: TermMatcher,
}

impl KnowledgeBase {
    pub fn new(index: InvertedIndex, dictionary: TermSet) -> Self {
        let matcher = TermMatcher::new(&dictionary);
        KnowledgeBase { index, dictionary, matcher }
    }

    /// Links the alias dictionary to `docs` and indexes them.
    pub fn build(mut docs: Vec<KnowledgeDocument>, aliases: &AliasTable) -> Result<Self, RetrievalError> {
        let mut dictionary = aliases.to_term_set();
        link_documents(&mut dictionary, &mut docs);
        let index = InvertedIndex::build(docs, Bm25Params::default())?;
        Ok(Self::new(index, dictionary))
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn dictionary(&self) -> &TermSet {
        &self.dictionary
    }

    pub fn matcher(&self) -> &TermMatcher {
        &self.matcher
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Patient,
    Doctor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDoc {
    pub doc_id: String,
    pub p_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub response: String,
    pub retrieved: Vec<RetrievedDoc>,
    pub terms: Vec<String>,
    pub feedback: FeedbackPrediction,
    pub trace_id: String,
    /// Generation rounds in the trace.
    pub rounds: usize,
    /// Whether retrieval was restricted to term-linked documents.
    pub restricted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub session_id: String,
    pub turns: Vec<Turn>,
    pub term_memory: TermSet,
    pub demo_memory: Vec<Demonstration>,
    pub sentiment_history: Vec<FeedbackPrediction>,
    pub results: Vec<TurnResult>,
}

impl DialogueSession {
    pub fn new(session_id: impl Into<String>) -> Self {
        DialogueSession { session_id: session_id.into(), ..Default::default() }
    }

    /// Past (patient + doctor text, predicted feedback) exchanges, oldest first.
    pub fn exchanges(&self) -> Vec<(String, crate::sentiment::SentimentLabel)> {
        self.turns
            .chunks(2)
            .zip(&self.sentiment_history)
            .map(|(pair, fb)| {
                let text = pair.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
                (text, fb.label)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Documents passed to generation.
    pub top_k: usize,
    /// Demonstrations per prompt.
    pub demos_k: usize,
    pub context: ContextWeights,
    pub generation: LoopConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { top_k: 3, demos_k: 2, context: ContextWeights::default(), generation: LoopConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutput {
    pub result: TurnResult,
    pub trace: RegenerationTrace,
}

/// Brings memory links in line with the current knowledge base, which may
/// have been rebuilt since the terms were first remembered.
fn refresh_links(memory: &mut TermSet, kb: &KnowledgeBase) {
    let current: Vec<_> = memory.iter().filter_map(|e| kb.dictionary.get(&e.term_id).cloned()).collect();
    for e in current {
        memory.upsert(e);
    }
    memory.retain_links(|d| kb.index.doc(d).is_some());
}

/// Runs one patient message through the pipeline. The session is only
/// modified when the turn succeeds.
#[allow(clippy::too_many_arguments)]
pub fn run_turn(
    kb: &KnowledgeBase,
    session: &mut DialogueSession,
    shared_demos: &[Demonstration],
    text: &str,
    backend: &dyn Generator,
    model: &FeedbackModel,
    config: &EngineConfig,
    timestamp: u64,
) -> Result<TurnOutput, PipelineError> {
    if text.trim().is_empty() {
        return Err(PipelineError::EmptyMessage);
    }
    let spans = kb.matcher.detect(text);
    let mut memory = session.term_memory.clone();
    session_memory_update(&mut memory, &spans, &kb.dictionary);
    refresh_links(&mut memory, kb);

    let eq = enhance_with(text, &memory, &kb.matcher);
    let retrieval = retrieve(&eq, &memory, &kb.index)?;
    let top = retrieval.top(config.top_k);
    let docs: Vec<PromptDoc> = top
        .iter()
        .filter_map(|d| {
            kb.index.doc(&d.doc_id).map(|doc| PromptDoc {
                doc_id: doc.id.clone(),
                title: doc.title.clone(),
                body: doc.body.clone(),
                p_hat: d.p_hat,
            })
        })
        .collect();

    let history = session.exchanges();
    let doc_weights: Vec<(&str, f64)> = docs.iter().map(|d| (d.body.as_str(), d.p_hat)).collect();
    let ctx = ContextEmbedding::build(text, &history, &doc_weights, config.context);
    let pool: Vec<Demonstration> = shared_demos.iter().chain(&session.demo_memory).cloned().collect();
    let demos: Vec<Demonstration> =
        select_indices(&ctx, &pool, config.demos_k).into_iter().map(|i| pool[i].clone()).collect();

    let (response, trace) = generate_with_feedback(
        text,
        PromptInputs { docs: &docs, demos: &demos },
        backend,
        model,
        &config.generation,
    )?;
    let feedback = trace.final_round().prediction.clone();

    let result = TurnResult {
        response: response.clone(),
        retrieved: top.iter().map(|d| RetrievedDoc { doc_id: d.doc_id.clone(), p_hat: d.p_hat }).collect(),
        terms: eq.term_ids().map(String::from).collect(),
        feedback: feedback.clone(),
        trace_id: format!("{}-t{}", session.session_id, session.results.len()),
        rounds: trace.rounds.len(),
        restricted: retrieval.restricted,
    };

    session.term_memory = memory;
    session.turns.push(Turn { role: Role::Patient, text: text.into(), timestamp });
    session.turns.push(Turn { role: Role::Doctor, text: response.clone(), timestamp });
    record_demonstration(&mut session.demo_memory, text, &response, feedback.label);
    session.sentiment_history.push(feedback);
    session.results.push(result.clone());
    Ok(TurnOutput { result, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genbackend::ScriptedBackend;
    use alloc::vec;

    fn kb() -> KnowledgeBase {
        let mut aliases = AliasTable::new();
        aliases.insert("fever", "FEVER").unwrap();
        aliases.insert("cough", "COUGH").unwrap();
        let docs = vec![
            KnowledgeDocument { id: "d1".into(), title: "Fever".into(), body: "Fever care: rest and fluids.".into(), terms: vec![] },
            KnowledgeDocument { id: "d2".into(), title: "Cough".into(), body: "A cough may need syrup.".into(), terms: vec![] },
            KnowledgeDocument { id: "d3".into(), title: "Teeth".into(), body: "Brush twice daily.".into(), terms: vec![] },
        ];
        KnowledgeBase::build(docs, &aliases).unwrap()
    }

    #[test]
    fn turn_updates_session() {
        let kb = kb();
        let backend = ScriptedBackend::new(["Rest well, take care and drink fluids often today."]).unwrap();
        let mut s = DialogueSession::new("s1");
        let out = run_turn(&kb, &mut s, &[], "I have a fever today", &backend, &FeedbackModel::seed(), &EngineConfig::default(), 1)
            .unwrap();
        assert_eq!(out.result.terms, vec!["FEVER"]);
        assert!(out.result.restricted);
        assert_eq!(out.result.retrieved.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(), vec!["d1"]);
        assert_eq!(s.turns.len(), 2);
        assert_eq!(s.turns[0].role, Role::Patient);
        assert_eq!(s.term_memory.len(), 1);
        assert_eq!(s.demo_memory.len(), 1);
        assert_eq!(out.result.trace_id, "s1-t0");

        run_turn(&kb, &mut s, &[], "the fever is still there", &backend, &FeedbackModel::seed(), &EngineConfig::default(), 2)
            .unwrap();
        assert_eq!(s.term_memory.len(), 1);
        assert_eq!(s.exchanges().len(), 2);
    }

    #[test]
    fn empty_message_is_rejected_without_side_effects() {
        let kb = kb();
        let backend = ScriptedBackend::new(["x"]).unwrap();
        let mut s = DialogueSession::new("s1");
        let err = run_turn(&kb, &mut s, &[], "  ", &backend, &FeedbackModel::seed(), &EngineConfig::default(), 0);
        assert_eq!(err, Err(PipelineError::EmptyMessage));
        assert!(s.turns.is_empty());
    }

    #[test]
    fn memory_follows_rebuilt_index() {
        let old = kb();
        let backend = ScriptedBackend::new(["Rest well, take care and drink fluids often today."]).unwrap();
        let mut s = DialogueSession::new("s1");
        let model = FeedbackModel::seed();
        run_turn(&old, &mut s, &[], "I have a fever", &backend, &model, &EngineConfig::default(), 1).unwrap();

        let mut aliases = AliasTable::new();
        aliases.insert("fever", "FEVER").unwrap();
        let docs = vec![KnowledgeDocument { id: "n1".into(), title: "Fever".into(), body: "Fever: fluids.".into(), terms: vec![] }];
        let new = KnowledgeBase::build(docs, &aliases).unwrap();
        let out = run_turn(&new, &mut s, &[], "fever again", &backend, &model, &EngineConfig::default(), 2).unwrap();
        assert_eq!(out.result.retrieved.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(), vec!["n1"]);
        let links: Vec<&str> = s.term_memory.get("FEVER").unwrap().linked_docs.iter().map(String::as_str).collect();
        assert_eq!(links, vec!["n1"]);
    }
}

//! Emotional in-context learning: demonstration memory, iterative
//! demonstration selection, prompt assembly and the sentiment-gated
//! regeneration loop.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genbackend::{BackendError, GenerationRequest, Generator};
use crate::sentiment::{predict_feedback, FeedbackModel, FeedbackPrediction, SentimentLabel};
use crate::tokenize::tokenize;
use crate::vector::SparseVec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EiclError {
    #[error("round {round}: {source}")]
    Backend { round: usize, source: BackendError },
    #[error("prompt needs {tokens} tokens, budget is {budget}")]
    PromptTooLong { tokens: usize, budget: usize },
    #[error("max_rounds must be at least 1")]
    NoRounds,
}

/// Bag-of-words features of a demonstration's text.
pub fn featurize(query: &str, response: &str) -> SparseVec {
    let mut text = String::with_capacity(query.len() + response.len() + 1);
    text.push_str(query);
    text.push(' ');
    text.push_str(response);
    SparseVec::bag_of_words(&text)
}

/// A stored (query, response, feedback) example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub query: String,
    pub response: String,
    pub sentiment: SentimentLabel,
    pub vector: SparseVec,
}

impl Demonstration {
    pub fn new(query: impl Into<String>, response: impl Into<String>, sentiment: SentimentLabel) -> Self {
        let (query, response) = (query.into(), response.into());
        let vector = featurize(&query, &response);
        Demonstration { query, response, sentiment, vector }
    }

    /// Rendered in the `Patient: ...; Doctor: ... We predict patient feedback: X.` form.
    pub fn render(&self) -> String {
        format!(
            "Patient: {}; Doctor: {} We predict patient feedback: {}.",
            self.query.trim().trim_end_matches(';'),
            self.response.trim(),
            self.sentiment
        )
    }
}

pub fn record_demonstration(
    memory: &mut Vec<Demonstration>,
    query: &str,
    response: &str,
    sentiment: SentimentLabel,
) {
    memory.push(Demonstration::new(query, response, sentiment));
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextWeights {
    pub emotional: f64,
    pub document: f64,
    /// Per-turn decay of the emotional history.
    pub decay: f64,
}

impl Default for ContextWeights {
    fn default() -> Self {
        ContextWeights { emotional: 0.5, document: 0.5, decay: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEmbedding {
    pub emotional: SparseVec,
    pub document: SparseVec,
    pub combined: SparseVec,
}

impl ContextEmbedding {
    pub fn new(emotional: SparseVec, document: SparseVec, weights: ContextWeights) -> Self {
        let mut combined = emotional.scaled(weights.emotional);
        combined.add_scaled(&document, weights.document);
        ContextEmbedding { emotional, document, combined }
    }

    /// Emotional part: the current query at weight 1 plus earlier exchanges,
    /// each scaled by `decay^age` and by its feedback sign (newest has age 1).
    /// Document part: retrieved bodies weighted by their sharpened score.
    pub fn build(
        query: &str,
        history: &[(String, SentimentLabel)],
        docs: &[(&str, f64)],
        weights: ContextWeights,
    ) -> Self {
        let mut emotional = SparseVec::bag_of_words(query);
        let mut factor = 1.0;
        for (text, label) in history.iter().rev() {
            factor *= weights.decay;
            emotional.add_scaled(&SparseVec::bag_of_words(text), factor * label.sign());
        }
        let mut document = SparseVec::new();
        for (body, p_hat) in docs {
            document.add_scaled(&SparseVec::bag_of_words(body), *p_hat);
        }
        Self::new(emotional, document, weights)
    }
}

/// Greedy iterative selection. Step `i` scores every unselected demonstration
/// by cosine similarity to `combined + mean(selected vectors)` and takes the
/// best; ties go to the earlier demonstration. Returns memory positions.
pub fn select_indices(ctx: &ContextEmbedding, memory: &[Demonstration], k: usize) -> Vec<usize> {
    let k = k.min(memory.len());
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut taken = alloc::vec![false; memory.len()];
    let mut selected_sum = SparseVec::new();
    for _ in 0..k {
        let mut point = ctx.combined.clone();
        if !chosen.is_empty() {
            point.add_scaled(&selected_sum, 1.0 / chosen.len() as f64);
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, d) in memory.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let c = point.cosine(&d.vector);
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        let (i, _) = best.expect("k is bounded by the unselected count");
        taken[i] = true;
        chosen.push(i);
        selected_sum.add_scaled(&memory[i].vector, 1.0);
    }
    chosen
}

pub fn select_demonstrations(ctx: &ContextEmbedding, memory: &[Demonstration], k: usize) -> Vec<Demonstration> {
    select_indices(ctx, memory, k).into_iter().map(|i| memory[i].clone()).collect()
}

pub const DEFAULT_PREAMBLE: &str = "You are an experienced and caring doctor answering an online medical \
consultation. Use the reference documents when they are relevant, answer accurately, and respond to the \
patient's concerns with empathy.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDoc {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub p_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub preamble: String,
    /// Maximum prompt length in tokens of the shared tokenizer.
    pub token_budget: usize,
    /// Document bodies are cut to this many words when over budget.
    pub doc_truncate_words: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig { preamble: DEFAULT_PREAMBLE.into(), token_budget: 2048, doc_truncate_words: 64 }
    }
}

/// `Please do not say, "<text>"`
pub fn constraint_clause(text: &str) -> String {
    format!("Please do not say, \"{}\"", text.trim())
}

fn render_prompt(
    query: &str,
    docs: &[PromptDoc],
    truncate: Option<usize>,
    demos: &[Demonstration],
    constraints: &[String],
    preamble: &str,
) -> String {
    let mut out = String::from(preamble.trim());
    out.push_str("\n\n");
    if !docs.is_empty() {
        let mut ordered: Vec<&PromptDoc> = docs.iter().collect();
        ordered.sort_by(|a, b| b.p_hat.partial_cmp(&a.p_hat).unwrap_or(core::cmp::Ordering::Equal));
        out.push_str("Reference documents:\n");
        for (i, d) in ordered.iter().enumerate() {
            let body: String = match truncate {
                Some(n) => d.body.split_whitespace().take(n).collect::<Vec<_>>().join(" "),
                None => d.body.trim().into(),
            };
            if d.title.trim().is_empty() {
                out.push_str(&format!("[{}] (p={:.3}) {}\n", i + 1, d.p_hat, body));
            } else {
                out.push_str(&format!("[{}] {} (p={:.3}) {}\n", i + 1, d.title.trim(), d.p_hat, body));
            }
        }
        out.push('\n');
    }
    if !demos.is_empty() {
        out.push_str("Examples:\n");
        for d in demos {
            out.push_str(&d.render());
            out.push('\n');
        }
        out.push('\n');
    }
    if !constraints.is_empty() {
        out.push_str("Constraints:\n");
        for c in constraints {
            out.push_str(c);
            out.push('\n');
        }
        out.push('\n');
    }
    out.push_str("Patient: ");
    out.push_str(query.trim());
    out.push_str("\nDoctor:");
    out
}

/// Lays out preamble, documents (by descending `p_hat`), demonstrations,
/// constraints and the query. Over budget, document bodies are truncated
/// first, then demonstrations are dropped from the end.
pub fn assemble_prompt(
    query: &str,
    docs: &[PromptDoc],
    demos: &[Demonstration],
    constraints: &[String],
    config: &PromptConfig,
) -> Result<String, EiclError> {
    let fits = |p: &str| {
        let n = tokenize(p).len();
        (n <= config.token_budget, n)
    };
    let prompt = render_prompt(query, docs, None, demos, constraints, &config.preamble);
    if fits(&prompt).0 {
        return Ok(prompt);
    }
    let mut kept = demos.len();
    loop {
        let prompt =
            render_prompt(query, docs, Some(config.doc_truncate_words), &demos[..kept], constraints, &config.preamble);
        let (ok, tokens) = fits(&prompt);
        if ok {
            return Ok(prompt);
        }
        if kept == 0 {
            return Err(EiclError::PromptTooLong { tokens, budget: config.token_budget });
        }
        kept -= 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_rounds: usize,
    pub max_tokens: u32,
    pub temperature: f64,
    pub prompt: PromptConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { max_rounds: 3, max_tokens: 512, temperature: 0.0, prompt: PromptConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRound {
    pub prompt: String,
    pub response: String,
    pub prediction: FeedbackPrediction,
    pub backend_id: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenerationTrace {
    pub rounds: Vec<TraceRound>,
    pub final_index: usize,
    pub constraint_texts: Vec<String>,
}

impl RegenerationTrace {
    pub fn final_round(&self) -> &TraceRound {
        &self.rounds[self.final_index]
    }
}

/// What the prompt is built from besides the query and constraints.
#[derive(Debug, Clone, Copy, Default)]
pub struct PromptInputs<'a> {
    pub docs: &'a [PromptDoc],
    pub demos: &'a [Demonstration],
}

/// Generates, predicts patient feedback and, while the prediction is Negative
/// and rounds remain, regenerates with a `Please do not say, "..."` constraint
/// for the rejected response. Emits the first non-Negative response, or the
/// highest-scoring round (earliest on ties) when every round is Negative.
pub fn generate_with_feedback(
    query: &str,
    inputs: PromptInputs<'_>,
    backend: &dyn Generator,
    model: &FeedbackModel,
    config: &LoopConfig,
) -> Result<(String, RegenerationTrace), EiclError> {
    if config.max_rounds == 0 {
        return Err(EiclError::NoRounds);
    }
    let mut rounds: Vec<TraceRound> = Vec::new();
    let mut constraints: Vec<String> = Vec::new();
    let mut final_index = None;
    for round in 0..config.max_rounds {
        let prompt = assemble_prompt(query, inputs.docs, inputs.demos, &constraints, &config.prompt)?;
        let req = GenerationRequest {
            prompt: prompt.clone(),
            max_tokens: config.max_tokens,
            temperature: config.temperature,
            stop: None,
        };
        let res = backend.generate(&req).map_err(|source| EiclError::Backend { round, source })?;
        let prediction = predict_feedback(query, &res.text, model);
        let negative = prediction.label == SentimentLabel::Negative;
        rounds.push(TraceRound {
            prompt,
            response: res.text,
            prediction,
            backend_id: res.backend_id,
            latency_ms: res.latency_ms,
            attempts: res.attempts,
        });
        if !negative {
            final_index = Some(round);
            break;
        }
        if round + 1 < config.max_rounds {
            constraints.push(constraint_clause(&rounds[round].response));
        }
    }
    let final_index = final_index.unwrap_or_else(|| {
        let mut best = 0;
        for (i, r) in rounds.iter().enumerate() {
            if r.prediction.score > rounds[best].prediction.score {
                best = i;
            }
        }
        best
    });
    let response = rounds[final_index].response.clone();
    Ok((response, RegenerationTrace { rounds, final_index, constraint_texts: constraints }))
}

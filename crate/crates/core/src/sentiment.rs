//! Lexicon-based sentiment scoring with negation, and patient-feedback
//! prediction used to gate response regeneration.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::{join_tokens, tokenize};

const SEED_LEXICON: &str = include_str!("../data/lexicon.tsv");
const SEED_NEGATORS: &str = include_str!("../data/negators.txt");
const SEED_SYMPTOMS: &str = include_str!("../data/symptoms.txt");

/// How many tokens before a match a negator may sit.
pub const NEGATION_WINDOW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    /// +1, -1 or 0.
    pub fn sign(self) -> f64 {
        match self {
            SentimentLabel::Positive => 1.0,
            SentimentLabel::Negative => -1.0,
            SentimentLabel::Neutral => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "Positive",
            SentimentLabel::Negative => "Negative",
            SentimentLabel::Neutral => "Neutral",
        }
    }
}

impl core::fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for SentimentLabel {
    type Err = SentimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(SentimentLabel::Positive),
            "negative" => Ok(SentimentLabel::Negative),
            "neutral" => Ok(SentimentLabel::Neutral),
            _ => Err(SentimentError::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SentimentError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("weight for `{0}` is not finite")]
    NonFiniteWeight(String),
    #[error("neg_cut {neg_cut} exceeds pos_cut {pos_cut}")]
    InvalidThresholds { neg_cut: f64, pos_cut: f64 },
    #[error("calibration needs at least one Positive and one Negative example")]
    InsufficientLabels,
    #[error("unknown sentiment label `{0}`")]
    UnknownLabel(String),
}

/// Weighted phrases plus negator tokens.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentimentLexicon {
    entries: BTreeMap<Vec<String>, f64>,
    negators: BTreeSet<String>,
    phrase_max_len: usize,
}

impl SentimentLexicon {
    pub fn new() -> Self {
        SentimentLexicon { phrase_max_len: 1, ..Default::default() }
    }

    /// The lexicon shipped with the crate.
    pub fn seed() -> Self {
        let mut lex = Self::parse_tsv(SEED_LEXICON).expect("seed lexicon parses");
        lex.add_negators_from(SEED_NEGATORS);
        lex
    }

    pub fn insert(&mut self, phrase: &str, weight: f64) -> Result<(), SentimentError> {
        if !weight.is_finite() {
            return Err(SentimentError::NonFiniteWeight(phrase.into()));
        }
        let tokens = tokenize(phrase);
        if tokens.is_empty() {
            return Ok(());
        }
        self.phrase_max_len = self.phrase_max_len.max(tokens.len());
        self.entries.insert(tokens, weight);
        Ok(())
    }

    pub fn add_negator(&mut self, token: &str) {
        for t in tokenize(token) {
            self.negators.insert(t);
        }
    }

    /// One negator per line; blank lines and `#` comments are skipped.
    pub fn add_negators_from(&mut self, text: &str) {
        for line in text.lines() {
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                self.add_negator(line);
            }
        }
    }

    /// Parses `phrase<TAB>weight` lines.
    pub fn parse_tsv(text: &str) -> Result<Self, SentimentError> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let parse_err = |reason: &str| SentimentError::Parse { line: i + 1, reason: reason.into() };
            let (phrase, weight) = line.split_once('\t').ok_or_else(|| parse_err("expected phrase<TAB>weight"))?;
            let weight: f64 = weight.trim().parse().map_err(|_| parse_err("weight is not a number"))?;
            lex.insert(phrase, weight)?;
        }
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn phrase_max_len(&self) -> usize {
        self.phrase_max_len
    }

    pub fn weight(&self, tokens: &[String]) -> Option<f64> {
        self.entries.get(tokens).copied()
    }

    pub fn is_negator(&self, token: &str) -> bool {
        self.negators.contains(token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub neg_cut: f64,
    pub pos_cut: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { neg_cut: -0.5, pos_cut: 0.5 }
    }
}

impl Thresholds {
    pub fn new(neg_cut: f64, pos_cut: f64) -> Result<Self, SentimentError> {
        if neg_cut > pos_cut || !neg_cut.is_finite() || !pos_cut.is_finite() {
            return Err(SentimentError::InvalidThresholds { neg_cut, pos_cut });
        }
        Ok(Thresholds { neg_cut, pos_cut })
    }

    pub fn label(&self, score: f64) -> SentimentLabel {
        if score < self.neg_cut {
            SentimentLabel::Negative
        } else if score > self.pos_cut {
            SentimentLabel::Positive
        } else {
            SentimentLabel::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub phrase: String,
    /// Signed contribution after negation.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPrediction {
    pub label: SentimentLabel,
    pub score: f64,
    pub evidence: Vec<Evidence>,
    /// Context penalty already included in `score`.
    #[serde(default)]
    pub penalty: f64,
}

/// Greedy left-to-right, longest-phrase-first matching; every token is
/// consumed at most once.
pub fn match_phrases(tokens: &[String], lexicon: &SentimentLexicon) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = lexicon.phrase_max_len.min(tokens.len() - i);
        match (1..=longest).rev().find_map(|len| lexicon.weight(&tokens[i..i + len]).map(|w| (len, w))) {
            Some((len, w)) => {
                out.push((i, i + len, w));
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

fn score_tokens(tokens: &[String], lexicon: &SentimentLexicon) -> (f64, Vec<Evidence>) {
    let mut score = 0.0;
    let mut evidence = Vec::new();
    for (start, end, w) in match_phrases(tokens, lexicon) {
        let negated = tokens[start.saturating_sub(NEGATION_WINDOW)..start].iter().any(|t| lexicon.is_negator(t));
        let w = if negated { -w } else { w };
        score += w;
        evidence.push(Evidence { phrase: join_tokens(&tokens[start..end]), weight: w });
    }
    (score, evidence)
}

/// Sums matched phrase weights and labels the total against `thresholds`.
pub fn classify(text: &str, lexicon: &SentimentLexicon, thresholds: Thresholds) -> FeedbackPrediction {
    let (score, evidence) = score_tokens(&tokenize(text), lexicon);
    FeedbackPrediction { label: thresholds.label(score), score, evidence, penalty: 0.0 }
}

/// Lexicon, thresholds and the context heuristics used to predict how a patient
/// will receive a response.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackModel {
    pub lexicon: SentimentLexicon,
    pub thresholds: Thresholds,
    pub symptoms: BTreeSet<Vec<String>>,
    /// Responses shorter than this (in tokens) to a symptom query are
    /// penalized as dismissive.
    pub min_substantive_len: usize,
    pub dismissive_penalty: f64,
}

impl Default for FeedbackModel {
    fn default() -> Self {
        FeedbackModel {
            lexicon: SentimentLexicon::new(),
            thresholds: Thresholds::default(),
            symptoms: BTreeSet::new(),
            min_substantive_len: 8,
            dismissive_penalty: 1.0,
        }
    }
}

impl FeedbackModel {
    /// Seed lexicon, seed symptom list and default thresholds.
    pub fn seed() -> Self {
        let mut m = FeedbackModel { lexicon: SentimentLexicon::seed(), ..Default::default() };
        m.add_symptoms_from(SEED_SYMPTOMS);
        m
    }

    pub fn add_symptom(&mut self, phrase: &str) {
        let t = tokenize(phrase);
        if !t.is_empty() {
            self.symptoms.insert(t);
        }
    }

    pub fn add_symptoms_from(&mut self, text: &str) {
        for line in text.lines() {
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                self.add_symptom(line);
            }
        }
    }

    fn mentions_symptom(&self, tokens: &[String]) -> bool {
        let max = self.symptoms.iter().map(Vec::len).max().unwrap_or(0);
        (0..tokens.len()).any(|i| (1..=max.min(tokens.len() - i)).any(|len| self.symptoms.contains(&tokens[i..i + len])))
    }

    pub fn classify(&self, text: &str) -> FeedbackPrediction {
        classify(text, &self.lexicon, self.thresholds)
    }
}

/// Predicted patient feedback to `response` given the `query` it answers: the
/// response's lexicon score, minus a penalty when a symptom query gets a reply
/// shorter than `min_substantive_len` tokens.
pub fn predict_feedback(query: &str, response: &str, model: &FeedbackModel) -> FeedbackPrediction {
    let tokens = tokenize(response);
    let (mut score, evidence) = score_tokens(&tokens, &model.lexicon);
    let mut penalty = 0.0;
    if tokens.len() < model.min_substantive_len && model.mentions_symptom(&tokenize(query)) {
        penalty = model.dismissive_penalty;
        score -= penalty;
    }
    FeedbackPrediction { label: model.thresholds.label(score), score, evidence, penalty }
}

/// Macro accuracy (mean per-class recall over the classes present).
pub fn macro_accuracy(scored: &[(f64, SentimentLabel)], thresholds: Thresholds) -> f64 {
    let mut per_class: BTreeMap<SentimentLabel, (usize, usize)> = BTreeMap::new();
    for &(s, gold) in scored {
        let e = per_class.entry(gold).or_insert((0, 0));
        e.1 += 1;
        if thresholds.label(s) == gold {
            e.0 += 1;
        }
    }
    if per_class.is_empty() {
        return 0.0;
    }
    per_class.values().map(|&(hit, n)| hit as f64 / n as f64).sum::<f64>() / per_class.len() as f64
}

/// Grid search over cut pairs maximizing macro accuracy on scored examples.
/// Candidate cuts are the midpoints between distinct scores, one point beyond
/// each end, and 0. Ties prefer the smallest `|neg_cut| + |pos_cut|`, then the
/// smaller `neg_cut`, then the smaller `pos_cut`.
pub fn calibrate_from_scores(scored: &[(f64, SentimentLabel)]) -> Result<Thresholds, SentimentError> {
    let has = |l| scored.iter().any(|&(_, g)| g == l);
    if !has(SentimentLabel::Positive) || !has(SentimentLabel::Negative) {
        return Err(SentimentError::InsufficientLabels);
    }
    let mut scores: Vec<f64> = scored.iter().map(|&(s, _)| s).filter(|s| s.is_finite()).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    scores.dedup();
    let mut cuts = Vec::with_capacity(scores.len() + 2);
    cuts.push(0.0);
    cuts.push(scores[0] - 1.0);
    cuts.push(scores[scores.len() - 1] + 1.0);
    cuts.extend(scores.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();

    let mut best: Option<(f64, Thresholds)> = None;
    for (i, &neg) in cuts.iter().enumerate() {
        for &pos in &cuts[i..] {
            let t = Thresholds { neg_cut: neg, pos_cut: pos };
            let acc = macro_accuracy(scored, t);
            let better = match best {
                None => true,
                Some((b_acc, b)) => {
                    let mag = |t: Thresholds| libm::fabs(t.neg_cut) + libm::fabs(t.pos_cut);
                    acc > b_acc + 1e-12
                        || (libm::fabs(acc - b_acc) <= 1e-12
                            && (mag(t), t.neg_cut, t.pos_cut) < (mag(b), b.neg_cut, b.pos_cut))
                }
            };
            if better {
                best = Some((acc, t));
            }
        }
    }
    Ok(best.expect("at least one candidate pair").1)
}

/// Scores each labeled (query, response) pair with `model` and calibrates.
pub fn calibrate_thresholds(
    labeled: &[(String, String, SentimentLabel)],
    model: &FeedbackModel,
) -> Result<Thresholds, SentimentError> {
    let scored: Vec<(f64, SentimentLabel)> =
        labeled.iter().map(|(q, r, l)| (predict_feedback(q, r, model).score, *l)).collect();
    calibrate_from_scores(&scored)
}

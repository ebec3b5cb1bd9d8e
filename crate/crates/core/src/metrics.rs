//! BLEU, GLEU, ROUGE and Distinct-n over the shared tokenizer.
//!
//! * `bleu_n`: corpus BLEU with uniform weights over orders `1..=n`, clipped
//!   counts and brevity penalty `exp(1 - r/c)` when `c < r`. An order with zero
//!   matches is smoothed to `(0 + 1) / (total + 1)`.
//! * `gleu`: matches, candidate n-grams and reference n-grams pooled over
//!   orders 1..4 and all pairs; the score is `min(precision, recall)`.
//! * ROUGE-N/L are per pair; `evaluate` macro-averages them.
//! * `distinct_n`: unique n-grams over total n-grams across all texts.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::tokenize;

pub const MAX_BLEU_ORDER: usize = 5;
pub const GLEU_MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("{candidates} candidates but {references} references")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order {0} is out of range")]
    InvalidOrder(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(pub Vec<String>);

impl TokenSeq {
    pub fn from_text(text: &str) -> Self {
        TokenSeq(tokenize(text))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ngrams(&self, n: usize) -> impl Iterator<Item = &[String]> {
        let n = n.max(1);
        self.0.windows(n)
    }

    fn ngram_counts(&self, n: usize) -> BTreeMap<&[String], usize> {
        let mut counts = BTreeMap::new();
        for g in self.ngrams(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
        counts
    }
}

impl From<&str> for TokenSeq {
    fn from(s: &str) -> Self {
        TokenSeq::from_text(s)
    }
}

/// Clipped matches, candidate n-gram count and reference n-gram count.
fn overlap(candidate: &TokenSeq, reference: &TokenSeq, n: usize) -> (usize, usize, usize) {
    let cand = candidate.ngram_counts(n);
    let refs = reference.ngram_counts(n);
    let matched = cand.iter().map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0))).sum();
    (matched, cand.values().sum(), refs.values().sum())
}

fn check_pairs(candidates: &[TokenSeq], references: &[TokenSeq]) -> Result<(), MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch { candidates: candidates.len(), references: references.len() });
    }
    if candidates.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

pub fn bleu_n(candidates: &[TokenSeq], references: &[TokenSeq], n: usize) -> Result<f64, MetricError> {
    check_pairs(candidates, references)?;
    if !(1..=MAX_BLEU_ORDER).contains(&n) {
        return Err(MetricError::InvalidOrder(n));
    }
    let c: usize = candidates.iter().map(TokenSeq::len).sum();
    let r: usize = references.iter().map(TokenSeq::len).sum();
    if c == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for order in 1..=n {
        let (mut matched, mut total) = (0usize, 0usize);
        for (cand, rf) in candidates.iter().zip(references) {
            let (m, t, _) = overlap(cand, rf, order);
            matched += m;
            total += t;
        }
        let p = if matched == 0 { 1.0 / (total as f64 + 1.0) } else { matched as f64 / total as f64 };
        log_sum += libm::log(p);
    }
    let bp = if c < r { libm::exp(1.0 - r as f64 / c as f64) } else { 1.0 };
    Ok(bp * libm::exp(log_sum / n as f64))
}

pub fn gleu(candidates: &[TokenSeq], references: &[TokenSeq]) -> Result<f64, MetricError> {
    check_pairs(candidates, references)?;
    let (mut matched, mut cand_total, mut ref_total) = (0usize, 0usize, 0usize);
    for (cand, rf) in candidates.iter().zip(references) {
        for order in 1..=GLEU_MAX_ORDER {
            let (m, c, r) = overlap(cand, rf, order);
            matched += m;
            cand_total += c;
            ref_total += r;
        }
    }
    if cand_total == 0 || ref_total == 0 {
        return Ok(0.0);
    }
    let precision = matched as f64 / cand_total as f64;
    let recall = matched as f64 / ref_total as f64;
    Ok(precision.min(recall))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(hits: usize, cand: usize, reference: usize) -> Self {
        let precision = if cand == 0 { 0.0 } else { hits as f64 / cand as f64 };
        let recall = if reference == 0 { 0.0 } else { hits as f64 / reference as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { precision, recall, f1 }
    }

    fn mean(items: &[Prf]) -> Prf {
        let n = items.len().max(1) as f64;
        Prf {
            precision: items.iter().map(|p| p.precision).sum::<f64>() / n,
            recall: items.iter().map(|p| p.recall).sum::<f64>() / n,
            f1: items.iter().map(|p| p.f1).sum::<f64>() / n,
        }
    }
}

pub fn rouge_n(candidate: &TokenSeq, reference: &TokenSeq, n: usize) -> Result<Prf, MetricError> {
    if n == 0 {
        return Err(MetricError::InvalidOrder(n));
    }
    let (m, c, r) = overlap(candidate, reference, n);
    Ok(Prf::from_counts(m, c, r))
}

/// Longest common subsequence length, two-row dynamic programming.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &TokenSeq, reference: &TokenSeq) -> Prf {
    let l = lcs_len(&candidate.0, &reference.0);
    Prf::from_counts(l, candidate.len(), reference.len())
}

pub fn distinct_n(texts: &[TokenSeq], n: usize) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::InvalidOrder(n));
    }
    let mut unique = BTreeSet::new();
    let mut total = 0usize;
    for t in texts {
        for g in t.ngrams(n) {
            unique.insert(g);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { unique.len() as f64 / total as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// BLEU-1 through BLEU-5.
    pub bleu: [f64; MAX_BLEU_ORDER],
    pub gleu: f64,
    pub rouge1: Prf,
    pub rouge2: Prf,
    #[serde(rename = "rougeL")]
    pub rouge_l: Prf,
    pub distinct1: f64,
    pub distinct2: f64,
    pub corpus_size: usize,
}

impl MetricReport {
    /// Every value lies in `[0, 1]`.
    pub fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.bleu.to_vec();
        v.push(self.gleu);
        for p in [self.rouge1, self.rouge2, self.rouge_l] {
            v.extend([p.precision, p.recall, p.f1]);
        }
        v.extend([self.distinct1, self.distinct2]);
        v
    }
}

pub fn evaluate_tokens(predictions: &[TokenSeq], references: &[TokenSeq]) -> Result<MetricReport, MetricError> {
    check_pairs(predictions, references)?;
    let mut bleu = [0.0; MAX_BLEU_ORDER];
    for (i, b) in bleu.iter_mut().enumerate() {
        *b = bleu_n(predictions, references, i + 1)?;
    }
    let mut r1 = Vec::with_capacity(predictions.len());
    let mut r2 = Vec::with_capacity(predictions.len());
    let mut rl = Vec::with_capacity(predictions.len());
    for (p, r) in predictions.iter().zip(references) {
        r1.push(rouge_n(p, r, 1)?);
        r2.push(rouge_n(p, r, 2)?);
        rl.push(rouge_l(p, r));
    }
    Ok(MetricReport {
        bleu,
        gleu: gleu(predictions, references)?,
        rouge1: Prf::mean(&r1),
        rouge2: Prf::mean(&r2),
        rouge_l: Prf::mean(&rl),
        distinct1: distinct_n(predictions, 1)?,
        distinct2: distinct_n(predictions, 2)?,
        corpus_size: predictions.len(),
    })
}

/// Tokenizes and scores parallel prediction/reference texts.
pub fn evaluate<S: AsRef<str>>(predictions: &[S], references: &[S]) -> Result<MetricReport, MetricError> {
    let p: Vec<TokenSeq> = predictions.iter().map(|s| TokenSeq::from_text(s.as_ref())).collect();
    let r: Vec<TokenSeq> = references.iter().map(|s| TokenSeq::from_text(s.as_ref())).collect();
    evaluate_tokens(&p, &r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(texts: &[&str]) -> Vec<TokenSeq> {
        texts.iter().map(|t| TokenSeq::from_text(t)).collect()
    }

    #[test]
    fn bleu_identity_and_brevity() {
        let x = seqs(&["the cat sat on the mat"]);
        for n in 1..=5 {
            assert_eq!(bleu_n(&x, &x, n).unwrap(), 1.0);
        }
        let b = bleu_n(&seqs(&["the cat sat"]), &seqs(&["the cat sat down"]), 1).unwrap();
        assert!((b - libm::exp(1.0 - 4.0 / 3.0)).abs() < 1e-15);
        assert!((b - 0.7165).abs() < 1e-4);
    }

    #[test]
    fn bleu_disjoint_is_smoothed() {
        // c = r = 3, no matches: (0 + 1) / (3 + 1)
        let b = bleu_n(&seqs(&["a b c"]), &seqs(&["x y z"]), 1).unwrap();
        assert_eq!(b, 0.25);
    }

    #[test]
    fn bleu_errors() {
        assert_eq!(
            bleu_n(&seqs(&["a"]), &[], 1),
            Err(MetricError::LengthMismatch { candidates: 1, references: 0 })
        );
        assert_eq!(bleu_n(&[], &[], 1), Err(MetricError::EmptyCorpus));
        assert_eq!(bleu_n(&seqs(&["a"]), &seqs(&["a"]), 6), Err(MetricError::InvalidOrder(6)));
    }

    #[test]
    fn gleu_examples() {
        let x = seqs(&["a b c d"]);
        assert_eq!(gleu(&x, &x).unwrap(), 1.0);
        assert_eq!(gleu(&seqs(&["a b"]), &seqs(&["c d"])).unwrap(), 0.0);
        // matched 2 + 1 + 0 = 3; candidate 3 + 2 + 1 = 6; reference 2 + 1 = 3
        assert_eq!(gleu(&seqs(&["a b a"]), &seqs(&["a b"])).unwrap(), 0.5);
    }

    #[test]
    fn rouge_examples() {
        let x = TokenSeq::from_text("one two three four five");
        assert_eq!(rouge_n(&x, &x, 2).unwrap(), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(rouge_n(&TokenSeq::default(), &x, 1).unwrap(), Prf::default());
        let p = rouge_n(&"the cat sat".into(), &"the cat ran".into(), 2).unwrap();
        assert_eq!(p, Prf { precision: 0.5, recall: 0.5, f1: 0.5 });
        let l = rouge_l(&"a b c d".into(), &"a c b d".into());
        assert_eq!(l, Prf { precision: 0.75, recall: 0.75, f1: 0.75 });
        assert_eq!(rouge_l(&TokenSeq::default(), &x), Prf::default());
        assert_eq!(rouge_l(&x, &x).f1, 1.0);
    }

    #[test]
    fn distinct_examples() {
        assert_eq!(distinct_n(&seqs(&["water water water"]), 1).unwrap(), 1.0 / 3.0);
        assert_eq!(distinct_n(&seqs(&["a b c"]), 1).unwrap(), 1.0);
        assert_eq!(distinct_n(&seqs(&["a b", "a b"]), 2).unwrap(), 0.5);
        assert_eq!(distinct_n(&seqs(&["a"]), 2).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_identity() {
        let texts = ["I have a fever today", "drink adequate fluids"];
        let r = evaluate(&texts, &texts).unwrap();
        assert_eq!(r.bleu[0], 1.0);
        assert_eq!(r.rouge1.f1, 1.0);
        assert_eq!(r.gleu, 1.0);
        assert_eq!(r.corpus_size, 2);
        assert!(evaluate(&texts, &texts[..1]).is_err());
    }

    #[test]
    fn evaluate_report_round_trips() {
        let r = evaluate(&["a b c", "d e"], &["a b", "d e f"]).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"rougeL\""));
        assert_eq!(serde_json::from_str::<MetricReport>(&json).unwrap(), r);
    }
}

//! Enhanced-query generation, link-restricted BM25 retrieval and softmax
//! sharpening of retrieval confidences.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::KnowledgeDocument;
use crate::terminology::{TermDetector, TermEntry, TermMatcher, TermSet};
use crate::tokenize::tokenize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{0}` is not indexed")]
    UnindexedDocument(String),
    #[error("no candidate documents to score")]
    EmptyCandidates,
    #[error("score for `{0}` is not finite")]
    NonFiniteScore(String),
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

/// A query rewritten for retrieval: the original text followed by the
/// canonical forms of the terms it mentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancedQuery {
    pub original: String,
    pub terms: Vec<TermEntry>,
    pub enhanced_text: String,
}

impl EnhancedQuery {
    pub fn term_ids(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|t| t.term_id.as_str())
    }
}

/// Detects memory terms in `query` and appends a `[TERMS: a, b]` block in
/// detection order. Without hits the enhanced text is the query itself.
pub fn generate_enhanced_query(query: &str, memory: &TermSet) -> EnhancedQuery {
    enhance_with(query, memory, &TermMatcher::new(memory))
}

pub fn enhance_with(query: &str, memory: &TermSet, detector: &dyn TermDetector) -> EnhancedQuery {
    let mut seen = BTreeSet::new();
    let terms: Vec<TermEntry> = detector
        .detect(query)
        .into_iter()
        .filter(|s| seen.insert(s.term_id.clone()))
        .filter_map(|s| memory.get(&s.term_id).cloned())
        .collect();
    let enhanced_text = if terms.is_empty() {
        query.into()
    } else {
        let names: Vec<&str> = terms.iter().map(|t| t.canonical.as_str()).collect();
        format!("{query} [TERMS: {}]", names.join(", "))
    };
    EnhancedQuery { original: query.into(), terms, enhanced_text }
}

/// Union of the documents linked from the query's terms.
pub fn candidate_docs(eq: &EnhancedQuery, memory: &TermSet) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for t in &eq.terms {
        let linked = memory.get(&t.term_id).map_or(&t.linked_docs, |e| &e.linked_docs);
        out.extend(linked.iter().cloned());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Token to posting-list index over document bodies. Postings are sorted by
/// document position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvertedIndex {
    docs: Vec<KnowledgeDocument>,
    positions: BTreeMap<String, u32>,
    doc_lens: Vec<u32>,
    total_len: u64,
    postings: BTreeMap<String, Vec<Posting>>,
    params: Bm25Params,
}

pub fn build_index(docs: &[KnowledgeDocument]) -> Result<InvertedIndex, RetrievalError> {
    InvertedIndex::build(docs.to_vec(), Bm25Params::default())
}

impl InvertedIndex {
    pub fn build(docs: Vec<KnowledgeDocument>, params: Bm25Params) -> Result<Self, RetrievalError> {
        let mut positions = BTreeMap::new();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lens = Vec::with_capacity(docs.len());
        let mut total_len = 0u64;
        for (i, doc) in docs.iter().enumerate() {
            if positions.insert(doc.id.clone(), i as u32).is_some() {
                return Err(RetrievalError::DuplicateId(doc.id.clone()));
            }
            let tokens = tokenize(&doc.body);
            doc_lens.push(tokens.len() as u32);
            total_len += tokens.len() as u64;
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push(Posting { doc: i as u32, tf: n });
            }
        }
        Ok(InvertedIndex { docs, positions, doc_lens, total_len, postings, params })
    }

    /// Reassembles an index from persisted parts, recomputing document lengths
    /// from the postings.
    pub fn from_parts(
        docs: Vec<KnowledgeDocument>,
        postings: BTreeMap<String, Vec<Posting>>,
        params: Bm25Params,
    ) -> Result<Self, RetrievalError> {
        let mut positions = BTreeMap::new();
        for (i, doc) in docs.iter().enumerate() {
            if positions.insert(doc.id.clone(), i as u32).is_some() {
                return Err(RetrievalError::DuplicateId(doc.id.clone()));
            }
        }
        let mut doc_lens = alloc::vec![0u32; docs.len()];
        for (token, list) in &postings {
            for w in list.windows(2) {
                if w[0].doc >= w[1].doc {
                    return Err(RetrievalError::Corrupt(format!("postings for `{token}` are not sorted")));
                }
            }
            for p in list {
                let len = doc_lens
                    .get_mut(p.doc as usize)
                    .ok_or_else(|| RetrievalError::Corrupt(format!("posting for `{token}` points past the corpus")))?;
                *len += p.tf;
            }
        }
        let total_len = doc_lens.iter().map(|&l| l as u64).sum();
        Ok(InvertedIndex { docs, positions, doc_lens, total_len, postings, params })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    /// Mean body length in tokens; 0 for an empty index.
    pub fn avg_len(&self) -> f64 {
        if self.docs.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.docs.len() as f64
        }
    }

    pub fn docs(&self) -> &[KnowledgeDocument] {
        &self.docs
    }

    pub fn doc(&self, id: &str) -> Option<&KnowledgeDocument> {
        self.positions.get(id).map(|&i| &self.docs[i as usize])
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn all_postings(&self) -> &BTreeMap<String, Vec<Posting>> {
        &self.postings
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        let df = df as f64;
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    fn term_weight(&self, tf: u32, doc: u32, avg: f64) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let dl = self.doc_lens[doc as usize] as f64;
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avg))
    }

    fn query_counts(text: &str) -> BTreeMap<String, f64> {
        let mut counts = BTreeMap::new();
        for t in tokenize(text) {
            *counts.entry(t).or_insert(0.0) += 1.0;
        }
        counts
    }

    /// BM25 of `query` against the given document positions.
    fn score_positions(&self, query: &str, docs: &[u32]) -> Vec<f64> {
        let mut scores = alloc::vec![0.0; docs.len()];
        let avg = self.avg_len();
        for (token, qtf) in Self::query_counts(query) {
            let list = self.postings(&token);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(list.len());
            for (slot, &d) in scores.iter_mut().zip(docs) {
                if let Ok(p) = list.binary_search_by(|p| p.doc.cmp(&d)) {
                    *slot += qtf * idf * self.term_weight(list[p].tf, d, avg);
                }
            }
        }
        scores
    }

    /// Term-at-a-time BM25 over the whole index; only documents sharing at
    /// least one token with the query are returned.
    fn score_all(&self, query: &str) -> BTreeMap<u32, f64> {
        let mut acc = BTreeMap::new();
        let avg = self.avg_len();
        for (token, qtf) in Self::query_counts(query) {
            let list = self.postings(&token);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(list.len());
            for p in list {
                *acc.entry(p.doc).or_insert(0.0) += qtf * idf * self.term_weight(p.tf, p.doc, avg);
            }
        }
        acc
    }
}

/// Raw retrieval scores, sorted descending with ties broken by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkedDocs {
    pub docs: Vec<(String, f64)>,
}

impl LinkedDocs {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    fn sorted(mut docs: Vec<(String, f64)>) -> Self {
        docs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
        LinkedDocs { docs }
    }
}

/// BM25 of the enhanced query text against each candidate's body.
pub fn score_candidates(
    eq: &EnhancedQuery,
    candidates: &BTreeSet<String>,
    index: &InvertedIndex,
) -> Result<LinkedDocs, RetrievalError> {
    let positions = candidates
        .iter()
        .map(|id| index.positions.get(id).copied().ok_or_else(|| RetrievalError::UnindexedDocument(id.clone())))
        .collect::<Result<Vec<u32>, _>>()?;
    let scores = index.score_positions(&eq.enhanced_text, &positions);
    Ok(LinkedDocs::sorted(candidates.iter().cloned().zip(scores).collect()))
}

/// Unrestricted BM25 over the whole index, used when a query mentions no
/// known terms.
pub fn score_full_index(eq: &EnhancedQuery, index: &InvertedIndex) -> LinkedDocs {
    let docs = index
        .score_all(&eq.enhanced_text)
        .into_iter()
        .map(|(pos, s)| (index.docs[pos as usize].id.clone(), s))
        .collect();
    LinkedDocs::sorted(docs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    /// Raw retrieval score.
    pub p: f64,
    /// Softmax-sharpened confidence.
    pub p_hat: f64,
}

/// A probability distribution over retrieved documents, descending.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocs {
    pub docs: Vec<ScoredDoc>,
}

impl ScoredDocs {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn top(&self, k: usize) -> &[ScoredDoc] {
        &self.docs[..k.min(self.docs.len())]
    }
}

/// Softmax over the candidate scores: `exp(p_n) / Σ exp(p_i)`, evaluated
/// after subtracting the maximum score.
pub fn sharpen_scores(raw: &LinkedDocs) -> Result<ScoredDocs, RetrievalError> {
    if raw.is_empty() {
        return Err(RetrievalError::EmptyCandidates);
    }
    if let Some((id, _)) = raw.docs.iter().find(|(_, p)| !p.is_finite()) {
        return Err(RetrievalError::NonFiniteScore(id.clone()));
    }
    let sorted = LinkedDocs::sorted(raw.docs.clone());
    let max = sorted.docs[0].1;
    let exps: Vec<f64> = sorted.docs.iter().map(|(_, p)| libm::exp(p - max)).collect();
    let total: f64 = exps.iter().sum();
    let docs = sorted
        .docs
        .into_iter()
        .zip(exps)
        .map(|((doc_id, p), e)| ScoredDoc { doc_id, p, p_hat: e / total })
        .collect();
    Ok(ScoredDocs { docs })
}

/// Outcome of retrieving for one enhanced query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    /// Term-linked candidates; empty when the query mentions no terms.
    pub candidates: BTreeSet<String>,
    /// Whether scoring was restricted to `candidates`.
    pub restricted: bool,
    /// Sharpened scores over all scored candidates.
    pub scored: ScoredDocs,
}

impl Retrieval {
    pub fn top(&self, k: usize) -> &[ScoredDoc] {
        self.scored.top(k)
    }
}

/// Link-restricted retrieval, falling back to the full index when the query
/// has no terms. Terms whose links are all empty yield no documents.
pub fn retrieve(eq: &EnhancedQuery, memory: &TermSet, index: &InvertedIndex) -> Result<Retrieval, RetrievalError> {
    let restricted = !eq.terms.is_empty();
    let candidates = if restricted { candidate_docs(eq, memory) } else { BTreeSet::new() };
    let raw = if restricted { score_candidates(eq, &candidates, index)? } else { score_full_index(eq, index) };
    let scored = if raw.is_empty() { ScoredDocs::default() } else { sharpen_scores(&raw)? };
    Ok(Retrieval { candidates, restricted, scored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terminology::AliasTable;
    use alloc::vec;

    fn doc(id: &str, body: &str) -> KnowledgeDocument {
        KnowledgeDocument { id: id.into(), title: String::new(), body: body.into(), terms: vec![] }
    }

    fn memory() -> TermSet {
        let mut t = AliasTable::new();
        t.insert("fever", "FEVER").unwrap();
        t.insert("cough", "COUGH").unwrap();
        let mut m = t.to_term_set();
        m.link_term("FEVER", ["d1", "d3"]).unwrap();
        m.link_term("COUGH", ["d1", "d2"]).unwrap();
        m
    }

    #[test]
    fn enhanced_query_templates() {
        let m = memory();
        let eq = generate_enhanced_query("I have a fever today", &m);
        assert_eq!(eq.enhanced_text, "I have a fever today [TERMS: fever]");
        let eq = generate_enhanced_query("hello", &m);
        assert_eq!(eq.enhanced_text, "hello");
        assert!(eq.terms.is_empty());
        let eq = generate_enhanced_query("cough then fever then cough", &m);
        assert_eq!(eq.enhanced_text, "cough then fever then cough [TERMS: cough, fever]");
    }

    #[test]
    fn candidates_are_link_unions() {
        let m = memory();
        let fever = generate_enhanced_query("fever", &m);
        assert_eq!(candidate_docs(&fever, &m).into_iter().collect::<Vec<_>>(), vec!["d1", "d3"]);
        let none = generate_enhanced_query("hello", &m);
        assert!(candidate_docs(&none, &m).is_empty());
        let mut t = AliasTable::new();
        t.insert("fever", "FEVER").unwrap();
        t.insert("cough", "COUGH").unwrap();
        let mut m2 = t.to_term_set();
        m2.link_term("FEVER", ["d1"]).unwrap();
        m2.link_term("COUGH", ["d1", "d2"]).unwrap();
        let both = generate_enhanced_query("fever cough", &m2);
        assert_eq!(candidate_docs(&both, &m2).into_iter().collect::<Vec<_>>(), vec!["d1", "d2"]);
    }

    #[test]
    fn index_basics() {
        let empty = build_index(&[]).unwrap();
        assert_eq!(empty.doc_count(), 0);
        assert_eq!(empty.avg_len(), 0.0);
        let idx = build_index(&[doc("d1", "fever care")]).unwrap();
        assert_eq!(idx.postings("fever"), &[Posting { doc: 0, tf: 1 }]);
        assert_eq!(idx.postings("care"), &[Posting { doc: 0, tf: 1 }]);
        assert_eq!(
            build_index(&[doc("d1", "a"), doc("d1", "b")]),
            Err(RetrievalError::DuplicateId("d1".into()))
        );
    }

    #[test]
    fn scoring_edges() {
        let idx = build_index(&[doc("d1", "fever care"), doc("d2", "broken arm")]).unwrap();
        let eq = generate_enhanced_query("fever", &TermSet::new());
        let one: BTreeSet<String> = ["d1".into()].into();
        let s = score_candidates(&eq, &one, &idx).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.docs[0].1 > 0.0);
        let zero: BTreeSet<String> = ["d2".into()].into();
        assert_eq!(score_candidates(&eq, &zero, &idx).unwrap().docs[0].1, 0.0);
        let missing: BTreeSet<String> = ["d9".into()].into();
        assert_eq!(
            score_candidates(&eq, &missing, &idx),
            Err(RetrievalError::UnindexedDocument("d9".into()))
        );
    }

    #[test]
    fn sharpen_examples() {
        let uniform = sharpen_scores(&LinkedDocs { docs: vec![("a".into(), 0.0), ("b".into(), 0.0), ("c".into(), 0.0)] })
            .unwrap();
        for d in &uniform.docs {
            assert!((d.p_hat - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = sharpen_scores(&LinkedDocs { docs: vec![("a".into(), 1.0), ("b".into(), 2.0)] }).unwrap();
        assert_eq!(s.docs[0].doc_id, "b");
        assert!((s.docs[0].p_hat - 0.7310585786300049).abs() < 1e-12);
        assert!((s.docs[1].p_hat - 0.2689414213699951).abs() < 1e-12);
        let big = sharpen_scores(&LinkedDocs { docs: vec![("a".into(), 1000.0), ("b".into(), 999.0)] }).unwrap();
        assert!((big.docs[0].p_hat - 0.7310585786300049).abs() < 1e-12);
        assert!((big.docs[1].p_hat - 0.2689414213699951).abs() < 1e-12);
    }

    #[test]
    fn sharpen_errors() {
        assert_eq!(sharpen_scores(&LinkedDocs::default()), Err(RetrievalError::EmptyCandidates));
        assert_eq!(
            sharpen_scores(&LinkedDocs { docs: vec![("a".into(), f64::NAN)] }),
            Err(RetrievalError::NonFiniteScore("a".into()))
        );
    }

    #[test]
    fn retrieval_falls_back_without_terms() {
        let m = memory();
        let idx = build_index(&[doc("d1", "fever and cough"), doc("d2", "cough syrup"), doc("d3", "fever rest")])
            .unwrap();
        let r = retrieve(&generate_enhanced_query("syrup please", &m), &m, &idx).unwrap();
        assert!(!r.restricted);
        assert_eq!(r.scored.docs[0].doc_id, "d2");
        let r = retrieve(&generate_enhanced_query("fever", &m), &m, &idx).unwrap();
        assert!(r.restricted);
        assert!(r.scored.docs.iter().all(|d| r.candidates.contains(&d.doc_id)));
    }
}

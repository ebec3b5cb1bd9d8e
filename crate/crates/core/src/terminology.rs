//! Terminology detection, alias alignment and term-to-document links.
//!
//! A [`TermSet`] is the terminology memory: canonical terms, their aliases and
//! the knowledge documents each term links to. Detection is dictionary driven:
//! [`TermMatcher`] performs greedy left-to-right longest-match over tokens.
//! [`TermDetector`] abstracts over detectors so a learned extractor can be
//! substituted.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::KnowledgeDocument;
use crate::tokenize::{join_tokens, normalize, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("unknown term `{0}`")]
    UnknownTerm(String),
    #[error("duplicate term id `{0}`")]
    DuplicateTerm(String),
    #[error("alias `{alias}` maps to both `{first}` and `{second}`")]
    AliasConflict { alias: String, first: String, second: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermEntry {
    pub term_id: String,
    pub canonical: String,
    pub aliases: BTreeSet<String>,
    #[serde(default)]
    pub linked_docs: BTreeSet<String>,
}

impl TermEntry {
    pub fn new(term_id: impl Into<String>, canonical: &str) -> Self {
        let canonical = normalize(canonical);
        let mut aliases = BTreeSet::new();
        aliases.insert(canonical.clone());
        TermEntry { term_id: term_id.into(), canonical, aliases, linked_docs: BTreeSet::new() }
    }
}

/// Ordered (by term id) collection of term entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TermEntry>", into = "Vec<TermEntry>")]
pub struct TermSet {
    entries: Vec<TermEntry>,
}

impl TermSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set, checking that term ids and aliases are unique.
    pub fn from_entries(mut entries: Vec<TermEntry>) -> Result<Self, TermError> {
        entries.sort_by(|a, b| a.term_id.cmp(&b.term_id));
        for w in entries.windows(2) {
            if w[0].term_id == w[1].term_id {
                return Err(TermError::DuplicateTerm(w[0].term_id.clone()));
            }
        }
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for e in &mut entries {
            if !e.aliases.contains(&e.canonical) {
                e.aliases.insert(e.canonical.clone());
            }
        }
        for e in &entries {
            for a in &e.aliases {
                if let Some(prev) = owner.insert(a, &e.term_id) {
                    return Err(TermError::AliasConflict {
                        alias: a.clone(),
                        first: prev.to_string(),
                        second: e.term_id.clone(),
                    });
                }
            }
        }
        Ok(TermSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TermEntry] {
        &self.entries
    }

    pub fn iter(&self) -> core::slice::Iter<'_, TermEntry> {
        self.entries.iter()
    }

    fn position(&self, term_id: &str) -> Result<usize, usize> {
        self.entries.binary_search_by(|e| e.term_id.as_str().cmp(term_id))
    }

    pub fn get(&self, term_id: &str) -> Option<&TermEntry> {
        self.position(term_id).ok().map(|i| &self.entries[i])
    }

    pub fn contains(&self, term_id: &str) -> bool {
        self.position(term_id).is_ok()
    }

    /// Inserts `entry` if its id is absent; otherwise merges aliases and links
    /// into the existing entry.
    pub fn upsert(&mut self, entry: TermEntry) {
        match self.position(&entry.term_id) {
            Ok(i) => {
                let e = &mut self.entries[i];
                e.aliases.extend(entry.aliases);
                e.linked_docs.extend(entry.linked_docs);
            }
            Err(i) => self.entries.insert(i, entry),
        }
    }

    /// Adds `doc_ids` to the term's links. Idempotent.
    pub fn link_term<I, S>(&mut self, term_id: &str, doc_ids: I) -> Result<(), TermError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let i = self.position(term_id).map_err(|_| TermError::UnknownTerm(term_id.into()))?;
        self.entries[i].linked_docs.extend(doc_ids.into_iter().map(Into::into));
        Ok(())
    }

    /// Keeps only the document links for which `keep` holds.
    pub fn retain_links(&mut self, mut keep: impl FnMut(&str) -> bool) {
        for e in &mut self.entries {
            e.linked_docs.retain(|d| keep(d));
        }
    }

    /// Every alias of every entry.
    pub fn surfaces(&self) -> Vec<String> {
        self.entries.iter().flat_map(|e| e.aliases.iter().cloned()).collect()
    }
}

impl TryFrom<Vec<TermEntry>> for TermSet {
    type Error = TermError;
    fn try_from(v: Vec<TermEntry>) -> Result<Self, Self::Error> {
        TermSet::from_entries(v)
    }
}

impl From<TermSet> for Vec<TermEntry> {
    fn from(s: TermSet) -> Self {
        s.entries
    }
}

/// A term occurrence in a query, in token offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpan {
    pub term_id: String,
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

/// Surface form to canonical term id. Surfaces are normalized on insert; the
/// first surface listed for a term is its canonical display form.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    by_surface: BTreeMap<String, String>,
    canonical: BTreeMap<String, String>,
}

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str, term_id: &str) -> Result<(), TermError> {
        let surface = normalize(surface);
        if surface.is_empty() {
            return Ok(());
        }
        if let Some(prev) = self.by_surface.get(&surface) {
            if prev != term_id {
                return Err(TermError::AliasConflict {
                    alias: surface,
                    first: prev.clone(),
                    second: term_id.into(),
                });
            }
            return Ok(());
        }
        self.canonical.entry(term_id.into()).or_insert_with(|| surface.clone());
        self.by_surface.insert(surface, term_id.into());
        Ok(())
    }

    /// Parses `surface<TAB>term_id` lines; blank lines and `#` comments are
    /// skipped.
    pub fn parse_tsv(text: &str) -> Result<Self, TermError> {
        let mut table = AliasTable::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(surface), Some(id), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(TermError::Parse { line: i + 1, reason: "expected two tab-separated columns".into() });
            };
            let id = id.trim();
            if id.is_empty() {
                return Err(TermError::Parse { line: i + 1, reason: "empty term id".into() });
            }
            table.insert(surface, id)?;
        }
        Ok(table)
    }

    pub fn lookup(&self, surface: &str) -> Option<&str> {
        self.by_surface.get(surface).map(String::as_str)
    }

    pub fn canonical(&self, term_id: &str) -> Option<&str> {
        self.canonical.get(term_id).map(String::as_str)
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.by_surface.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_surface.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_surface.is_empty()
    }

    /// The full terminology dictionary described by this table.
    pub fn to_term_set(&self) -> TermSet {
        align_terms(self.surfaces(), self)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AlignConfig {
    /// Surfaces with fewer characters (after normalization, excluding spaces)
    /// are dropped.
    pub min_chars: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig { min_chars: 2 }
    }
}

/// Filters and aligns raw surfaces into a term set. Surfaces that map to the
/// same id merge into one entry; unknown surfaces become their own entry keyed
/// by the normalized surface.
pub fn align_terms<I, S>(raw_terms: I, alias_table: &AliasTable) -> TermSet
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    align_terms_with(raw_terms, alias_table, AlignConfig::default())
}

pub fn align_terms_with<I, S>(raw_terms: I, alias_table: &AliasTable, config: AlignConfig) -> TermSet
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut entries: BTreeMap<String, TermEntry> = BTreeMap::new();
    for raw in raw_terms {
        let surface = normalize(raw.as_ref());
        if surface.chars().filter(|c| *c != ' ').count() < config.min_chars {
            continue;
        }
        let (id, canonical) = match alias_table.lookup(&surface) {
            Some(id) => (id.to_string(), alias_table.canonical(id).unwrap_or(&surface).to_string()),
            None => (surface.clone(), surface.clone()),
        };
        let entry = entries.entry(id.clone()).or_insert_with(|| TermEntry::new(id, &canonical));
        entry.aliases.insert(surface);
    }
    TermSet { entries: entries.into_values().collect() }
}

/// Anything that can extract term spans from a query.
pub trait TermDetector {
    fn detect(&self, query: &str) -> Vec<TermSpan>;
}

/// Dictionary-driven longest-match detector over a [`TermSet`]'s aliases.
#[derive(Debug, Clone, Default)]
pub struct TermMatcher {
    by_tokens: BTreeMap<Vec<String>, String>,
    max_len: usize,
}

impl TermMatcher {
    pub fn new(terms: &TermSet) -> Self {
        let mut by_tokens: BTreeMap<Vec<String>, String> = BTreeMap::new();
        let mut max_len = 0;
        for e in terms.iter() {
            for alias in &e.aliases {
                let toks = tokenize(alias);
                if toks.is_empty() {
                    continue;
                }
                max_len = max_len.max(toks.len());
                by_tokens
                    .entry(toks)
                    .and_modify(|id| {
                        if e.term_id < *id {
                            *id = e.term_id.clone();
                        }
                    })
                    .or_insert_with(|| e.term_id.clone());
            }
        }
        TermMatcher { by_tokens, max_len }
    }

    /// Greedy left-to-right longest match over a pre-tokenized query.
    pub fn detect_tokens(&self, tokens: &[String]) -> Vec<TermSpan> {
        let mut spans = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_len.min(tokens.len() - i);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| self.by_tokens.get(&tokens[i..i + len]).map(|id| (len, id)));
            match hit {
                Some((len, id)) => {
                    spans.push(TermSpan {
                        term_id: id.clone(),
                        surface: join_tokens(&tokens[i..i + len]),
                        start: i,
                        end: i + len,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        spans
    }
}

impl TermDetector for TermMatcher {
    fn detect(&self, query: &str) -> Vec<TermSpan> {
        self.detect_tokens(&tokenize(query))
    }
}

/// One-shot detection; build a [`TermMatcher`] once when detecting repeatedly.
pub fn detect_terms(query: &str, dictionary: &TermSet) -> Vec<TermSpan> {
    TermMatcher::new(dictionary).detect(query)
}

/// Adds every detected term to the session memory. Entries are copied from
/// `dictionary` (aliases and links); existing entries keep their links and gain
/// any new ones from the dictionary.
pub fn session_memory_update(memory: &mut TermSet, new_spans: &[TermSpan], dictionary: &TermSet) {
    for span in new_spans {
        let entry = match dictionary.get(&span.term_id) {
            Some(e) => e.clone(),
            None => TermEntry::new(span.term_id.clone(), &span.surface),
        };
        memory.upsert(entry);
    }
}

/// Links each term to the documents whose title or body mention it and records
/// the term ids on the documents. Returns the number of (term, doc) links.
pub fn link_documents(terms: &mut TermSet, docs: &mut [KnowledgeDocument]) -> usize {
    let matcher = TermMatcher::new(terms);
    let mut links = 0;
    for doc in docs.iter_mut() {
        let mut text = String::with_capacity(doc.title.len() + doc.body.len() + 1);
        text.push_str(&doc.title);
        text.push('\n');
        text.push_str(&doc.body);
        let ids: BTreeSet<String> = matcher.detect(&text).into_iter().map(|s| s.term_id).collect();
        for id in &ids {
            // ids come from the matcher built over `terms`
            let i = terms.position(id).expect("matcher ids exist in the term set");
            if terms.entries[i].linked_docs.insert(doc.id.clone()) {
                links += 1;
            }
        }
        doc.terms = ids.into_iter().collect();
    }
    links
}

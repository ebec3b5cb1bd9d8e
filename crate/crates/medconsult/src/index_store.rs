//! Index artifact: a JSONL file whose first line is a versioned header and
//! whose remaining lines hold documents, terms and posting lists. The header
//! carries a SHA-256 over the remaining lines.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use medconsult_core::corpus::KnowledgeDocument;
use medconsult_core::pipeline::KnowledgeBase;
use medconsult_core::retrieval::{Bm25Params, InvertedIndex, Posting, RetrievalError};
use medconsult_core::terminology::{AliasTable, TermEntry, TermSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats;

pub const FORMAT: &str = "medconsult-index";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub format: String,
    pub version: u32,
    pub k1: f64,
    pub b: f64,
    pub docs: usize,
    pub terms: usize,
    pub tokens: usize,
    pub sha256: String,
}

/// What a build produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub docs: usize,
    pub terms: usize,
    pub links: usize,
    pub tokens: usize,
    pub checksum: String,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Line {
    Doc(KnowledgeDocument),
    Term(TermEntry),
    Postings { token: String, list: Vec<(u32, u32)> },
}

fn body_lines(kb: &KnowledgeBase) -> Vec<String> {
    let index = kb.index();
    let mut out = Vec::with_capacity(index.doc_count() + kb.dictionary().len() + index.all_postings().len());
    let enc = |l: &Line| serde_json::to_string(l).expect("index lines serialize");
    for d in index.docs() {
        out.push(enc(&Line::Doc(d.clone())));
    }
    for t in kb.dictionary().iter() {
        out.push(enc(&Line::Term(t.clone())));
    }
    for (token, list) in index.all_postings() {
        let list = list.iter().map(|p| (p.doc, p.tf)).collect();
        out.push(enc(&Line::Postings { token: token.clone(), list }));
    }
    out
}

fn digest(lines: &[String]) -> String {
    let mut h = Sha256::new();
    for l in lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn summarize(kb: &KnowledgeBase) -> IndexSummary {
    IndexSummary {
        docs: kb.index().doc_count(),
        terms: kb.dictionary().len(),
        links: kb.dictionary().iter().map(|t| t.linked_docs.len()).sum(),
        tokens: kb.index().all_postings().len(),
        checksum: digest(&body_lines(kb)),
    }
}

pub fn save(path: &Path, kb: &KnowledgeBase) -> Result<IndexSummary> {
    let lines = body_lines(kb);
    let params = kb.index().params();
    let header = IndexHeader {
        format: FORMAT.into(),
        version: VERSION,
        k1: params.k1,
        b: params.b,
        docs: kb.index().doc_count(),
        terms: kb.dictionary().len(),
        tokens: kb.index().all_postings().len(),
        sha256: digest(&lines),
    };
    let mut buf = serde_json::to_string(&header).map_err(|e| Error::Storage(e.to_string()))?;
    buf.push('\n');
    for l in &lines {
        buf.push_str(l);
        buf.push('\n');
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(summarize(kb))
}

pub fn load(path: &Path) -> Result<(KnowledgeBase, IndexSummary)> {
    let text = formats::read_to_string(path)?;
    let mut lines = text.lines();
    let header: IndexHeader = match lines.next() {
        Some(h) => serde_json::from_str(h).map_err(|e| Error::parse(path, 1, e.to_string()))?,
        None => return Err(Error::parse(path, 1, "missing header")),
    };
    if header.format != FORMAT {
        return Err(Error::parse(path, 1, format!("unexpected format `{}`", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::parse(path, 1, format!("unsupported version {}", header.version)));
    }
    let body: Vec<String> = lines.map(String::from).collect();
    if digest(&body) != header.sha256 {
        return Err(Error::parse(path, 1, "checksum mismatch"));
    }
    let mut docs = Vec::new();
    let mut terms = Vec::new();
    let mut postings = BTreeMap::new();
    for (i, l) in body.iter().enumerate() {
        match serde_json::from_str(l).map_err(|e| Error::parse(path, i + 2, e.to_string()))? {
            Line::Doc(d) => docs.push(d),
            Line::Term(t) => terms.push(t),
            Line::Postings { token, list } => {
                postings.insert(token, list.into_iter().map(|(doc, tf)| Posting { doc, tf }).collect());
            }
        }
    }
    let dictionary = TermSet::from_entries(terms)?;
    let index = InvertedIndex::from_parts(docs, postings, Bm25Params { k1: header.k1, b: header.b })?;
    let kb = KnowledgeBase::new(index, dictionary);
    let summary = summarize(&kb);
    Ok((kb, summary))
}

/// Records on each document the terms that link to it. Every link must name
/// a document in `docs`.
pub fn attach_links(docs: &mut [KnowledgeDocument], links: &TermSet) -> Result<()> {
    let mut by_doc: BTreeMap<&str, Vec<String>> = docs.iter().map(|d| (d.id.as_str(), Vec::new())).collect();
    for t in links.iter() {
        for d in &t.linked_docs {
            by_doc
                .get_mut(d.as_str())
                .ok_or_else(|| RetrievalError::UnindexedDocument(d.clone()))?
                .push(t.term_id.clone());
        }
    }
    let by_doc: BTreeMap<String, Vec<String>> = by_doc.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
    for d in docs.iter_mut() {
        d.terms = by_doc[&d.id].clone();
    }
    Ok(())
}

/// Knowledge base from documents and a prebuilt link table.
pub fn build_from_links(mut docs: Vec<KnowledgeDocument>, links: TermSet) -> Result<KnowledgeBase> {
    attach_links(&mut docs, &links)?;
    let index = InvertedIndex::build(docs, Bm25Params::default())?;
    Ok(KnowledgeBase::new(index, links))
}

/// Knowledge base from document and alias files.
pub fn build_from_files(docs: &Path, aliases: &Path) -> Result<KnowledgeBase> {
    let docs = formats::load_documents(docs)?;
    let aliases: AliasTable = formats::load_alias_table(aliases)?;
    Ok(KnowledgeBase::build(docs, &aliases)?)
}

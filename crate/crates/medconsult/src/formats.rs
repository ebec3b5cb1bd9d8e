//! File formats: JSONL corpora and documents, TSV alias and lexicon tables,
//! term link tables and generation scripts.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use medconsult_core::corpus::{ConsultationRecord, KnowledgeDocument};
use medconsult_core::sentiment::{FeedbackModel, SentimentLexicon};
use medconsult_core::terminology::{AliasTable, TermEntry, TermError, TermSet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pii::PiiFilter;

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads non-blank JSONL lines as `T`, reporting 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(&row).map_err(|e| Error::Storage(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a consultation corpus. Records must have a unique id and a non-empty
/// query; lines matching `pii` are rejected.
pub fn load_corpus_with(path: &Path, pii: Option<&PiiFilter>) -> Result<Vec<ConsultationRecord>> {
    if let Some(filter) = pii {
        filter.check_file(path)?;
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, rec) in read_jsonl::<ConsultationRecord>(path)? {
        rec.validate().map_err(|e| Error::parse(path, line, e.to_string()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId { path: path.into(), line, id: rec.id });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<ConsultationRecord>> {
    load_corpus_with(path, None)
}

pub fn load_documents(path: &Path) -> Result<Vec<KnowledgeDocument>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, doc) in read_jsonl::<KnowledgeDocument>(path)? {
        doc.validate().map_err(|e| Error::parse(path, line, e.to_string()))?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId { path: path.into(), line, id: doc.id });
        }
        out.push(doc);
    }
    Ok(out)
}

fn term_error(path: &Path, e: TermError) -> Error {
    match e {
        TermError::Parse { line, reason } => Error::parse(path, line, reason),
        other => Error::Terms(other),
    }
}

pub fn load_alias_table(path: &Path) -> Result<AliasTable> {
    AliasTable::parse_tsv(&read_to_string(path)?).map_err(|e| term_error(path, e))
}

/// Term link table: one [`TermEntry`] per line.
pub fn load_links(path: &Path) -> Result<TermSet> {
    let entries: Vec<TermEntry> = read_jsonl(path)?.into_iter().map(|(_, e)| e).collect();
    TermSet::from_entries(entries).map_err(|e| term_error(path, e))
}

pub fn write_links(path: &Path, terms: &TermSet) -> Result<()> {
    write_jsonl(path, terms.iter())
}

pub fn load_lexicon(path: &Path, negators: Option<&Path>) -> Result<SentimentLexicon> {
    let mut lex = SentimentLexicon::parse_tsv(&read_to_string(path)?).map_err(|e| match e {
        medconsult_core::sentiment::SentimentError::Parse { line, reason } => Error::parse(path, line, reason),
        other => Error::Sentiment(other),
    })?;
    if let Some(n) = negators {
        lex.add_negators_from(&read_to_string(n)?);
    }
    Ok(lex)
}

/// Seed feedback model with optional lexicon, negator and symptom overrides.
pub fn load_feedback_model(lexicon: Option<&Path>, negators: Option<&Path>, symptoms: Option<&Path>) -> Result<FeedbackModel> {
    let mut model = FeedbackModel::seed();
    if let Some(lex) = lexicon {
        model.lexicon = load_lexicon(lex, negators)?;
    } else if let Some(n) = negators {
        model.lexicon.add_negators_from(&read_to_string(n)?);
    }
    if let Some(s) = symptoms {
        model.symptoms.clear();
        model.add_symptoms_from(&read_to_string(s)?);
    }
    Ok(model)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptLine {
    pub text: String,
}

/// Scripted-backend responses: JSONL, one `{"text": ...}` per line.
pub fn load_script(path: &Path) -> Result<Vec<String>> {
    let rows: Vec<String> = read_jsonl::<ScriptLine>(path)?.into_iter().map(|(_, l)| l.text).collect();
    if rows.is_empty() {
        return Err(Error::parse(path, 0, "script has no responses"));
    }
    Ok(rows)
}

/// `{id, text}` rows used by the evaluation harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextRow {
    pub id: String,
    pub text: String,
}

pub fn load_text_rows(path: &Path) -> Result<Vec<TextRow>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, row) in read_jsonl::<TextRow>(path)? {
        if !seen.insert(row.id.clone()) {
            return Err(Error::DuplicateId { path: path.into(), line, id: row.id });
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empty_corpus_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_corpus(&write(&dir, "c.jsonl", "")).unwrap().is_empty());
    }

    #[test]
    fn single_record_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let line = r#"{"id":"r1","department":"pediatrics","query":"I have a fever today","response":"Rest.","feedback_sentiment":"Negative"}"#;
        let recs = load_corpus(&write(&dir, "c.jsonl", &format!("{line}\n"))).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].department, "pediatrics");
        assert_eq!(serde_json::to_string(&recs[0]).unwrap(), line);
    }

    #[test]
    fn missing_query_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let body = concat!(
            r#"{"id":"r1","query":"a"}"#, "\n",
            r#"{"id":"r2","response":"b"}"#, "\n",
            r#"{"id":"r3","query":"c"}"#, "\n"
        );
        match load_corpus(&write(&dir, "c.jsonl", body)) {
            Err(Error::Parse { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("query"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"id\":\"r1\",\"query\":\"a\"}\n{\"id\":\"r1\",\"query\":\"b\"}\n";
        assert!(matches!(load_corpus(&write(&dir, "c.jsonl", body)), Err(Error::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn unreadable_path_is_io_failure() {
        assert!(matches!(load_corpus(Path::new("/nonexistent/c.jsonl")), Err(Error::Io { .. })));
    }

    #[test]
    fn alias_parse_errors_carry_path_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.tsv", "fever\tFEVER\nbroken line\n");
        assert!(matches!(load_alias_table(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn links_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = AliasTable::new();
        t.insert("fever", "FEVER").unwrap();
        let mut set = t.to_term_set();
        set.link_term("FEVER", ["d1"]).unwrap();
        let p = dir.path().join("links.jsonl");
        write_links(&p, &set).unwrap();
        assert_eq!(load_links(&p).unwrap(), set);
    }
}

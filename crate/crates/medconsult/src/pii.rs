//! Rejects corpus lines that look like they carry personal identifiers.
//!
//! Patterns come from a file, one regular expression per line; blank lines
//! and `#` comments are skipped. There are no built-in patterns.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use regex::RegexSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PiiFilter {
    set: RegexSet,
}

impl PiiFilter {
    pub fn from_patterns<I, S>(patterns: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let patterns: Vec<String> = patterns.into_iter().map(|p| p.as_ref().to_owned()).collect();
        for p in &patterns {
            regex::Regex::new(p).map_err(|e| Error::Pattern { pattern: p.clone(), reason: e.to_string() })?;
        }
        let set = RegexSet::new(&patterns).map_err(|e| Error::Pattern { pattern: patterns.join("|"), reason: e.to_string() })?;
        Ok(PiiFilter { set })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_patterns(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')))
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// Pattern matched by `text`, if any.
    pub fn first_match(&self, text: &str) -> Option<&str> {
        self.set.matches(text).iter().next().map(|i| self.set.patterns()[i].as_str())
    }

    pub fn check_file(&self, path: &Path) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if let Some(p) = self.first_match(&line) {
                return Err(Error::PersonalIdentifier { path: path.into(), line: i + 1, pattern: p.to_owned() });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_and_reports_pattern() {
        let f = PiiFilter::from_patterns([r"\b\d{3}-\d{4}\b", r"@\w+\.com"]).unwrap();
        assert_eq!(f.first_match("call 555-1234"), Some(r"\b\d{3}-\d{4}\b"));
        assert_eq!(f.first_match("I have a fever"), None);
    }

    #[test]
    fn bad_pattern_is_an_error() {
        assert!(matches!(PiiFilter::from_patterns(["("]), Err(Error::Pattern { .. })));
    }

    #[test]
    fn corpus_line_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let pat = dir.path().join("p.txt");
        fs::write(&pat, "# phone numbers\n\\d{3}-\\d{4}\n").unwrap();
        let corpus = dir.path().join("c.jsonl");
        fs::write(&corpus, "{\"id\":\"a\",\"query\":\"fever\"}\n{\"id\":\"b\",\"query\":\"call 555-1234\"}\n").unwrap();
        let f = PiiFilter::load(&pat).unwrap();
        let err = crate::formats::load_corpus_with(&corpus, Some(&f)).unwrap_err();
        assert!(matches!(err, Error::PersonalIdentifier { line: 2, .. }));
    }
}

//! Consultation records, knowledge documents and the train/test split.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sentiment::SentimentLabel;

/// Fraction of records held out for testing.
pub const DEFAULT_TEST_FRACTION: f64 = 0.30;

/// One patient query and clinician response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsultationRecord {
    pub id: String,
    #[serde(default)]
    pub department: String,
    pub query: String,
    #[serde(default)]
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback_sentiment: Option<SentimentLabel>,
}

/// A retrievable knowledge-base document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeDocument {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    /// Term ids linking to this document; filled in by
    /// [`crate::terminology::link_documents`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("test fraction {0} is outside (0, 1)")]
    InvalidFraction(f64),
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: &'static str },
}

impl ConsultationRecord {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let reason = if self.id.is_empty() {
            "id is empty"
        } else if self.query.trim().is_empty() {
            "query is empty"
        } else {
            return Ok(());
        };
        Err(CorpusError::InvalidRecord { id: self.id.clone(), reason })
    }
}

impl KnowledgeDocument {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let reason = if self.id.is_empty() {
            "id is empty"
        } else if self.body.trim().is_empty() {
            "body is empty"
        } else {
            return Ok(());
        };
        Err(CorpusError::InvalidRecord { id: self.id.clone(), reason })
    }
}

/// Checks id uniqueness across a list of ids, returning the first repeat.
pub fn check_unique_ids<'a, I: IntoIterator<Item = &'a str>>(ids: I) -> Result<(), CorpusError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(CorpusError::DuplicateId(id.into()));
        }
    }
    Ok(())
}

/// Number of test records for `total` records: `fraction * total` rounded
/// half-up.
pub fn test_size(total: usize, fraction: f64) -> usize {
    let exact = fraction * total as f64;
    // absorbs representation error such as 0.3 * 5 = 1.4999999999999998
    let nudged = exact + 0.5 + 1e-9 * exact.max(1.0);
    (libm::floor(nudged) as usize).min(total)
}

/// Deterministic seeded split. Test ids are a uniformly shuffled sample; both
/// halves keep file order.
pub fn split_corpus(
    records: &[ConsultationRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(test_fraction));
    }
    check_unique_ids(records.iter().map(|r| r.id.as_str()))?;

    let n_test = test_size(records.len(), test_fraction);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut in_test = alloc::vec![false; records.len()];
    for &i in &order[..n_test] {
        in_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, &t) in records.iter().zip(&in_test) {
        if t {
            test.push(r.id.clone());
        } else {
            train.push(r.id.clone());
        }
    }
    Ok(CorpusSplit { train, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn records(n: usize) -> Vec<ConsultationRecord> {
        (0..n)
            .map(|i| ConsultationRecord {
                id: format!("r{i}"),
                department: "general".into(),
                query: format!("query {i}"),
                response: format!("response {i}"),
                feedback_sentiment: None,
            })
            .collect()
    }

    #[test]
    fn ten_records_thirty_percent() {
        let s = split_corpus(&records(10), 0.30, 7).unwrap();
        assert_eq!(s.test.len(), 3);
        assert_eq!(s.train.len(), 7);
    }

    #[test]
    fn single_record_rounds_to_zero_test() {
        let s = split_corpus(&records(1), 0.30, 7).unwrap();
        assert_eq!(s.test.len(), 0);
        assert_eq!(s.train.len(), 1);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let r = records(50);
        assert_eq!(split_corpus(&r, 0.3, 11).unwrap(), split_corpus(&r, 0.3, 11).unwrap());
    }

    #[test]
    fn seeds_change_the_split() {
        let r = records(20);
        let splits: BTreeSet<Vec<String>> =
            (0..10).map(|seed| split_corpus(&r, 0.3, seed).unwrap().test).collect();
        assert!(splits.len() >= 2);
    }

    #[test]
    fn half_rounds_up() {
        assert_eq!(test_size(5, 0.3), 2);
        assert_eq!(test_size(15, 0.3), 5);
        assert_eq!(test_size(4, 0.5), 2);
        assert_eq!(test_size(1, 0.5), 1);
    }

    #[test]
    fn error_paths() {
        assert_eq!(split_corpus(&[], 0.3, 0), Err(CorpusError::EmptyCorpus));
        assert!(matches!(split_corpus(&records(3), 1.0, 0), Err(CorpusError::InvalidFraction(_))));
        let mut dup = records(2);
        dup[1].id = "r0".into();
        assert_eq!(split_corpus(&dup, 0.3, 0), Err(CorpusError::DuplicateId("r0".into())));
    }

    #[test]
    fn record_validation() {
        let mut r = records(1).remove(0);
        assert!(r.validate().is_ok());
        r.query = "  ".into();
        assert!(r.validate().is_err());
    }
}

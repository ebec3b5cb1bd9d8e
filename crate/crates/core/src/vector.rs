//! Sparse bag-of-words vectors over the shared tokenizer's vocabulary.

use alloc::collections::BTreeMap;
use alloc::string::String;
use serde::{Deserialize, Serialize};

use crate::tokenize::tokenize;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SparseVec(pub BTreeMap<String, f64>);

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Token counts of `text`.
    pub fn bag_of_words(text: &str) -> Self {
        let mut v = Self::new();
        for t in tokenize(text) {
            *v.0.entry(t).or_insert(0.0) += 1.0;
        }
        v
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, token: &str) -> f64 {
        self.0.get(token).copied().unwrap_or(0.0)
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &SparseVec, scale: f64) {
        if scale == 0.0 {
            return;
        }
        for (k, v) in &other.0 {
            *self.0.entry(k.clone()).or_insert(0.0) += scale * v;
        }
    }

    pub fn scaled(&self, scale: f64) -> SparseVec {
        SparseVec(self.0.iter().map(|(k, v)| (k.clone(), v * scale)).collect())
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (small, large) = if self.0.len() <= other.0.len() { (self, other) } else { (other, self) };
        small
            .0
            .iter()
            .filter_map(|(k, v)| large.0.get(k).map(|w| v * w))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.values().map(|v| v * v).sum())
    }

    /// Cosine similarity; 0 when either vector has zero norm.
    pub fn cosine(&self, other: &SparseVec) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }
}

impl FromIterator<(String, f64)> for SparseVec {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        SparseVec(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_tokens() {
        let v = SparseVec::bag_of_words("water Water juice");
        assert_eq!(v.get("water"), 2.0);
        assert_eq!(v.get("juice"), 1.0);
        assert_eq!(v.get("tea"), 0.0);
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        let v = SparseVec::bag_of_words("a b");
        assert_eq!(v.cosine(&SparseVec::new()), 0.0);
        assert!((v.cosine(&v) - 1.0).abs() < 1e-12);
    }
}

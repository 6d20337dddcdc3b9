use std::collections::HashSet;

use super::{Scorer, ScorerSpec};
use crate::error::Result;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "for", "from", "had", "has",
    "have", "he", "her", "his", "in", "into", "is", "it", "its", "of", "on", "or", "she", "that",
    "the", "their", "them", "they", "this", "to", "was", "were", "which", "who", "will", "with",
];

/// Lowercased, punctuation-free, deduplicated tokens.
pub fn token_set(text: &str, remove_stopwords: bool) -> HashSet<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !(remove_stopwords && STOPWORDS.contains(t)))
        .map(str::to_string)
        .collect()
}

/// Set-F1 of the two token sets: `2|A∩B| / (|A| + |B|)`, or 0 if either is empty.
pub fn lexical_score(summary_prop: &str, doc_prop: &str, spec: &ScorerSpec) -> f64 {
    let a = token_set(summary_prop, spec.remove_stopwords());
    let b = token_set(doc_prop, spec.remove_stopwords());
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let shared = a.intersection(&b).count();
    2.0 * shared as f64 / (a.len() + b.len()) as f64
}

/// Deterministic token-overlap scorer.
#[derive(Debug, Clone)]
pub struct LexicalScorer {
    spec: ScorerSpec,
}

impl LexicalScorer {
    pub fn new(spec: ScorerSpec) -> Self {
        LexicalScorer { spec }
    }
}

impl Scorer for LexicalScorer {
    fn scorer_id(&self) -> String {
        if self.spec.remove_stopwords() {
            "lexical-f1+stopwords".into()
        } else {
            "lexical-f1".into()
        }
    }

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        Ok(pairs
            .iter()
            .map(|(a, b)| lexical_score(a, b, &self.spec))
            .collect())
    }
}

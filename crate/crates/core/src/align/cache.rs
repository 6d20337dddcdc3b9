use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::normalize_whitespace;

/// Key for a scored pair: SHA-256 over the scorer id and both normalized texts.
pub fn cache_key(scorer_id: &str, summary_prop: &str, doc_prop: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(scorer_id.as_bytes());
    hasher.update([0x1f]);
    hasher.update(normalize_whitespace(summary_prop).as_bytes());
    hasher.update([0x1f]);
    hasher.update(normalize_whitespace(doc_prop).as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    score: f64,
}

/// Pair scores keyed by content, shared between workers.
#[derive(Debug, Default)]
pub struct ScoreCache {
    scores: RwLock<HashMap<String, f64>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        let found = self.scores.read().expect("cache lock").get(key).copied();
        let counter = if found.is_some() {
            &self.hits
        } else {
            &self.misses
        };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    pub fn insert(&self, key: String, score: f64) {
        self.scores.write().expect("cache lock").insert(key, score);
    }

    pub fn len(&self) -> usize {
        self.scores.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    /// Load a cache file written by [`ScoreCache::save`]; a missing file gives an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        let cache = ScoreCache::new();
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(Error::io(path, e)),
        };
        {
            let mut scores = cache.scores.write().expect("cache lock");
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                let entry: Entry = serde_json::from_str(&line).map_err(|e| Error::Record {
                    line: n + 1,
                    message: e.to_string(),
                })?;
                scores.insert(entry.key, entry.score);
            }
        }
        Ok(cache)
    }

    /// Write entries sorted by key, one JSON object per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let scores = self.scores.read().expect("cache lock");
        let mut entries: Vec<_> = scores.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (key, &score) in entries {
            serde_json::to_writer(
                &mut out,
                &Entry {
                    key: key.clone(),
                    score,
                },
            )?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_ignore_whitespace_but_not_direction_or_scorer() {
        assert_eq!(cache_key("s", "a  b", "c"), cache_key("s", " a b ", "c"));
        assert_ne!(cache_key("s", "a", "b"), cache_key("s", "b", "a"));
        assert_ne!(cache_key("s", "a", "b"), cache_key("t", "a", "b"));
        assert_ne!(cache_key("s", "a b", "c"), cache_key("s", "a", "b c"));
    }

    #[test]
    fn hits_return_stored_score() {
        let cache = ScoreCache::new();
        assert_eq!(cache.get("k"), None);
        cache.insert("k".into(), 0.123_456_789_012_345_6);
        assert_eq!(cache.get("k"), Some(0.123_456_789_012_345_6));
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = ScoreCache::new();
        cache.insert("b".into(), 0.1 + 0.2);
        cache.insert("a".into(), 1.0 / 3.0);
        cache.save(&path).unwrap();
        let loaded = ScoreCache::load(&path).unwrap();
        assert_eq!(loaded.get("a"), Some(1.0 / 3.0));
        assert_eq!(loaded.get("b"), Some(0.1 + 0.2));
        assert!(ScoreCache::load(&dir.path().join("none"))
            .unwrap()
            .is_empty());
    }
}

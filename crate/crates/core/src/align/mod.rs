//! Summary-to-document proposition alignment.
//!
//! Every (summary proposition, document proposition) pair of a topic is scored
//! by a pluggable [`Scorer`]. All scores are kept in the resulting
//! [`AlignmentRelation`]; consumers binarize at its threshold.

mod cache;
mod lexical;
mod remote;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

pub use cache::{cache_key, ScoreCache};
pub use lexical::{lexical_score, token_set, LexicalScorer};
pub use remote::{Health, RemoteScorer, RetryPolicy};

use crate::coverage::check_unit_interval;
use crate::error::{Error, Result};
use crate::model::{AlignmentEdge, AlignmentRelation, Topic};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Scores proposition pairs, summary side first.
pub trait Scorer: Send + Sync {
    fn scorer_id(&self) -> String;

    /// One score in `[0, 1]` per pair, in request order.
    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>>;

    /// Whether the scorer may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    Lexical,
    Remote,
    Precomputed,
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerKind::Lexical => "lexical",
            ScorerKind::Remote => "remote",
            ScorerKind::Precomputed => "precomputed",
        })
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lexical" => Ok(ScorerKind::Lexical),
            "remote" => Ok(ScorerKind::Remote),
            "precomputed" => Ok(ScorerKind::Precomputed),
            other => Err(Error::Invalid(format!("unknown scorer {other:?}"))),
        }
    }
}

/// Scorer configuration. Values are validated as they are set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerSpec {
    kind: ScorerKind,
    threshold: f64,
    endpoint: Option<String>,
    batch_size: usize,
    remove_stopwords: bool,
    max_in_flight: usize,
}

impl ScorerSpec {
    pub fn new(kind: ScorerKind) -> Self {
        ScorerSpec {
            kind,
            threshold: DEFAULT_THRESHOLD,
            endpoint: None,
            batch_size: DEFAULT_BATCH_SIZE,
            remove_stopwords: false,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        check_unit_interval("threshold", threshold)?;
        self.threshold = threshold;
        Ok(self)
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = Some(endpoint.into());
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Invalid("batch_size must be at least 1".into()));
        }
        self.batch_size = batch_size;
        Ok(self)
    }

    pub fn with_stopword_removal(mut self, remove: bool) -> Self {
        self.remove_stopwords = remove;
        self
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Result<Self> {
        if max_in_flight == 0 {
            return Err(Error::Invalid("max_in_flight must be at least 1".into()));
        }
        self.max_in_flight = max_in_flight;
        Ok(self)
    }

    pub fn kind(&self) -> ScorerKind {
        self.kind
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn endpoint(&self) -> Option<&str> {
        self.endpoint.as_deref()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn remove_stopwords(&self) -> bool {
        self.remove_stopwords
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    /// Instantiate the configured scorer. Precomputed alignments have no scorer.
    pub fn build(&self) -> Result<Box<dyn Scorer>> {
        match self.kind {
            ScorerKind::Lexical => Ok(Box::new(LexicalScorer::new(self.clone()))),
            ScorerKind::Remote => Ok(Box::new(RemoteScorer::new(self)?)),
            ScorerKind::Precomputed => Err(Error::Invalid(
                "precomputed alignments are loaded from a file, not scored".into(),
            )),
        }
    }
}

/// Score every summary × document proposition pair of one summary.
///
/// Pairs with identical normalized texts are scored once. With a cache, known
/// pairs are never sent to the scorer; the relation is the same either way.
pub fn align_topic(
    topic: &Topic,
    summary_id: &str,
    scorer: &dyn Scorer,
    cache: Option<&ScoreCache>,
    spec: &ScorerSpec,
) -> Result<AlignmentRelation> {
    let summary = topic.summary(summary_id).ok_or_else(|| {
        Error::UnknownReference(format!("topic {}: no summary {summary_id}", topic.topic_id))
    })?;
    let missing = |unit: &str| {
        Error::Invalid(format!(
            "topic {}: unit {unit} has no propositions to align",
            topic.topic_id
        ))
    };
    let summary_props = summary
        .propositions
        .as_ref()
        .ok_or_else(|| missing(summary_id))?;
    for doc in &topic.documents {
        if doc.propositions.is_none() {
            return Err(missing(&doc.doc_id));
        }
    }

    let scorer_id = scorer.scorer_id();
    let mut edges = Vec::new();
    let mut keys = Vec::new();
    for sp in summary_props {
        for doc in &topic.documents {
            for dp in doc.propositions() {
                keys.push(cache_key(&scorer_id, &sp.text, &dp.text));
                edges.push((sp, doc, dp));
            }
        }
    }

    let mut known: HashMap<&str, f64> = HashMap::new();
    let mut queued: HashSet<&str> = HashSet::new();
    let mut pending: Vec<(&str, (&str, &str))> = Vec::new();
    for (key, (sp, _, dp)) in keys.iter().zip(&edges) {
        if known.contains_key(key.as_str()) || !queued.insert(key.as_str()) {
            continue;
        }
        match cache.and_then(|c| c.get(key)) {
            Some(score) => {
                known.insert(key, score);
            }
            None => pending.push((key, (sp.text.as_str(), dp.text.as_str()))),
        }
    }

    for (batch, chunk) in pending.chunks(spec.batch_size()).enumerate() {
        let pairs: Vec<(&str, &str)> = chunk.iter().map(|(_, pair)| *pair).collect();
        let scores = scorer
            .score_batch(&pairs)
            .and_then(|scores| check_scores(&scores, pairs.len()))
            .map_err(|source| Error::Batch {
                batch,
                source: Box::new(source),
            })?;
        for ((key, _), score) in chunk.iter().zip(scores) {
            known.insert(key, score);
            if let Some(cache) = cache {
                cache.insert(key.to_string(), score);
            }
        }
    }

    let edges = edges
        .into_iter()
        .zip(&keys)
        .map(|((sp, doc, dp), key)| AlignmentEdge {
            summary_prop: sp.id.clone(),
            doc_id: doc.doc_id.clone(),
            doc_prop: dp.id.clone(),
            score: known[key.as_str()],
        })
        .collect();
    Ok(AlignmentRelation {
        topic_id: topic.topic_id.clone(),
        summary_id: summary_id.to_string(),
        edges,
        threshold: spec.threshold(),
        scorer_id,
    })
}

fn check_scores(scores: &[f64], expected: usize) -> Result<Vec<f64>> {
    if scores.len() != expected {
        return Err(Error::Invalid(format!(
            "scorer returned {} scores for {expected} pairs",
            scores.len()
        )));
    }
    for (i, &score) in scores.iter().enumerate() {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreRange {
                what: format!("pair {i}"),
                score,
            });
        }
    }
    Ok(scores.to_vec())
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::coverage::{greedy_curve, rethreshold, BinaryCoverageMap};
    use crate::model::{Document, Proposition, Summary};

    /// Lexical scorer that counts how often it is invoked.
    struct Counting {
        inner: LexicalScorer,
        calls: AtomicUsize,
        pairs: AtomicUsize,
    }

    impl Counting {
        fn new() -> Self {
            Counting {
                inner: LexicalScorer::new(ScorerSpec::new(ScorerKind::Lexical)),
                calls: AtomicUsize::new(0),
                pairs: AtomicUsize::new(0),
            }
        }
    }

    impl Scorer for Counting {
        fn scorer_id(&self) -> String {
            self.inner.scorer_id()
        }

        fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.pairs.fetch_add(pairs.len(), Ordering::SeqCst);
            self.inner.score_batch(pairs)
        }
    }

    fn topic() -> Topic {
        let docs = (0..2)
            .map(|d| {
                Document::from_propositions(
                    format!("d{d}"),
                    (0..3)
                        .map(|q| Proposition::new(format!("q{q}"), format!("word{d}{q} shared{q}")))
                        .collect(),
                )
            })
            .collect();
        let summary = Summary::reference(
            "s",
            vec![
                Proposition::new("p0", "word00 shared0"),
                Proposition::new("p1", "word12 shared2"),
            ],
        );
        Topic::new("t", docs, vec![summary]).unwrap()
    }

    #[test]
    fn every_pair_gets_an_edge() {
        let spec = ScorerSpec::new(ScorerKind::Lexical);
        let scorer = spec.build().unwrap();
        let relation = align_topic(&topic(), "s", scorer.as_ref(), None, &spec).unwrap();
        assert_eq!(relation.edges.len(), 12);
        assert_eq!(relation.threshold, 0.5);
        assert_eq!(relation.scorer_id, "lexical-f1");
        let top: Vec<_> = relation
            .aligned_edges()
            .map(|e| {
                (
                    e.summary_prop.as_str(),
                    e.doc_id.as_str(),
                    e.doc_prop.as_str(),
                    e.score,
                )
            })
            .collect();
        assert_eq!(
            top,
            vec![
                ("p0", "d0", "q0", 1.0),
                ("p0", "d1", "q0", 0.5),
                ("p1", "d0", "q2", 0.5),
                ("p1", "d1", "q2", 1.0),
            ]
        );
    }

    #[test]
    fn warm_cache_needs_no_scorer_calls() {
        let spec = ScorerSpec::new(ScorerKind::Lexical)
            .with_batch_size(5)
            .unwrap();
        let cache = ScoreCache::new();
        let cold = Counting::new();
        let first = align_topic(&topic(), "s", &cold, Some(&cache), &spec).unwrap();
        assert_eq!(cold.pairs.load(Ordering::SeqCst), 12);
        assert_eq!(cold.calls.load(Ordering::SeqCst), 3);

        let warm = Counting::new();
        let second = align_topic(&topic(), "s", &warm, Some(&cache), &spec).unwrap();
        assert_eq!(warm.calls.load(Ordering::SeqCst), 0);
        assert_eq!(first, second);

        let uncached = align_topic(&topic(), "s", &Counting::new(), None, &spec).unwrap();
        assert_eq!(uncached, first);
    }

    #[test]
    fn identical_texts_are_scored_once() {
        let docs = vec![
            Document::from_propositions("d0", vec![Proposition::new("q0", "same text")]),
            Document::from_propositions("d1", vec![Proposition::new("q0", "same  text")]),
        ];
        let topic = Topic::new(
            "t",
            docs,
            vec![Summary::reference(
                "s",
                vec![Proposition::new("p0", "same text")],
            )],
        )
        .unwrap();
        let scorer = Counting::new();
        let spec = ScorerSpec::new(ScorerKind::Lexical);
        let relation = align_topic(&topic, "s", &scorer, None, &spec).unwrap();
        assert_eq!(scorer.pairs.load(Ordering::SeqCst), 1);
        assert_eq!(relation.edges.len(), 2);
    }

    #[test]
    fn spec_rejects_bad_values() {
        assert!(ScorerSpec::new(ScorerKind::Lexical)
            .with_threshold(1.1)
            .is_err());
        assert!(ScorerSpec::new(ScorerKind::Lexical)
            .with_threshold(-0.1)
            .is_err());
        assert!(ScorerSpec::new(ScorerKind::Lexical)
            .with_batch_size(0)
            .is_err());
        assert!(ScorerSpec::new(ScorerKind::Remote).build().is_err());
        assert!(ScorerSpec::new(ScorerKind::Precomputed).build().is_err());
        assert_eq!("remote".parse::<ScorerKind>().unwrap(), ScorerKind::Remote);
        assert!("neural".parse::<ScorerKind>().is_err());
    }

    struct Broken;

    impl Scorer for Broken {
        fn scorer_id(&self) -> String {
            "broken".into()
        }

        fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
            Ok(vec![1.5; pairs.len()])
        }
    }

    #[test]
    fn out_of_range_scores_fail_with_batch_index() {
        let spec = ScorerSpec::new(ScorerKind::Lexical);
        let err = align_topic(&topic(), "s", &Broken, None, &spec).unwrap_err();
        assert!(matches!(err, Error::Batch { batch: 0, .. }), "{err}");
    }

    #[test]
    fn raising_threshold_never_adds_edges() {
        let spec = ScorerSpec::new(ScorerKind::Lexical);
        let relation = align_topic(
            &topic(),
            "s",
            &LexicalScorer::new(spec.clone()),
            None,
            &spec,
        )
        .unwrap();
        let mut previous = usize::MAX;
        for step in 0..=10 {
            let r = rethreshold(&relation, step as f64 / 10.0).unwrap();
            let count = r.aligned_edges().count();
            assert!(count <= previous);
            previous = count;
        }
        let t = topic();
        let curve =
            greedy_curve(&BinaryCoverageMap::from_relation(&t, &relation).unwrap()).unwrap();
        assert_eq!(curve.cov, vec![1.0, 1.0]);
        let strict = rethreshold(&relation, 0.75).unwrap();
        let curve = greedy_curve(&BinaryCoverageMap::from_relation(&t, &strict).unwrap()).unwrap();
        assert_eq!(curve.cov, vec![0.5, 1.0]);
    }
}

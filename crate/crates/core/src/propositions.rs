//! Proposition extraction for units that arrive as raw text.
//!
//! Three sources are supported: a deterministic sentence splitter, tuples from an
//! external open information extraction run (read from a sidecar file and turned
//! into strings by concatenating their parts in text order), and propositions
//! already present in the dataset.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_whitespace, Proposition, Topic};

pub const DEFAULT_ABBREVIATIONS: &[&str] =
    &["Dr.", "Mr.", "Mrs.", "Ms.", "U.S.", "etc.", "e.g.", "i.e."];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractionMode {
    /// Split raw text into sentences.
    Sentence,
    /// Every unit must already carry propositions.
    Precomputed,
    /// Read extraction tuples from the given sidecar file.
    External(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractorConfig {
    pub mode: ExtractionMode,
    /// Tokens ending in `.` that never end a sentence.
    pub abbreviations: BTreeSet<String>,
    /// Sentences with fewer whitespace tokens are dropped.
    pub min_tokens: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            mode: ExtractionMode::Sentence,
            abbreviations: DEFAULT_ABBREVIATIONS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            min_tokens: 3,
        }
    }
}

impl ExtractorConfig {
    pub fn with_min_tokens(mut self, min_tokens: usize) -> Self {
        self.min_tokens = min_tokens;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_tokens == 0 {
            return Err(Error::Invalid("min_tokens must be at least 1".into()));
        }
        Ok(())
    }

    /// Short label recorded in reports.
    pub fn extractor_id(&self) -> String {
        match &self.mode {
            ExtractionMode::Sentence => format!("sentence(min_tokens={})", self.min_tokens),
            ExtractionMode::Precomputed => "precomputed".into(),
            ExtractionMode::External(_) => "external-tuples".into(),
        }
    }
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Split `text` into sentence propositions with character spans.
///
/// A sentence ends at a run of `.`, `!` or `?` followed by whitespace and an
/// uppercase letter or digit, unless the token carrying the punctuation is a
/// listed abbreviation. Ids are `s0`, `s1`, ... over the kept sentences.
pub fn extract_sentences(text: &str, config: &ExtractorConfig) -> Vec<Proposition> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if !is_terminal(chars[i]) {
            i += 1;
            continue;
        }
        let mut end = i;
        while end < chars.len() && is_terminal(chars[end]) {
            end += 1;
        }
        let mut next = end;
        while next < chars.len() && chars[next].is_whitespace() {
            next += 1;
        }
        let boundary = next > end
            && next < chars.len()
            && (chars[next].is_uppercase() || chars[next].is_ascii_digit());
        if boundary {
            let token_start = chars[..end]
                .iter()
                .rposition(|c| c.is_whitespace())
                .map_or(0, |p| p + 1);
            let token: String = chars[token_start..end].iter().collect();
            if !config.abbreviations.contains(&token) {
                spans.push((start, end));
                start = next;
            }
        }
        i = end;
    }
    spans.push((start, chars.len()));

    let mut props = Vec::new();
    for (lo, hi) in spans {
        let mut lo = lo;
        let mut hi = hi;
        while lo < hi && chars[lo].is_whitespace() {
            lo += 1;
        }
        while hi > lo && chars[hi - 1].is_whitespace() {
            hi -= 1;
        }
        let slice: String = chars[lo..hi].iter().collect();
        if slice.split_whitespace().count() < config.min_tokens.max(1) {
            continue;
        }
        props.push(
            Proposition::new(format!("s{}", props.len()), normalize_whitespace(&slice))
                .with_span(lo, hi),
        );
    }
    props
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleSpan {
    pub text: String,
    #[serde(default)]
    pub start: Option<usize>,
    #[serde(default)]
    pub end: Option<usize>,
}

impl TupleSpan {
    pub fn new(text: impl Into<String>, start: usize) -> Self {
        let text = text.into();
        let end = start + text.chars().count();
        TupleSpan {
            text,
            start: Some(start),
            end: Some(end),
        }
    }
}

/// A predicate with its arguments, each located in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionTuple {
    pub predicate: TupleSpan,
    #[serde(default)]
    pub arguments: Vec<TupleSpan>,
}

impl ExtractionTuple {
    fn parts(&self) -> impl Iterator<Item = &TupleSpan> {
        std::iter::once(&self.predicate).chain(&self.arguments)
    }

    /// True when two components claim overlapping character ranges.
    pub fn has_overlap(&self) -> bool {
        let mut ranges: Vec<(usize, usize)> = self
            .parts()
            .filter_map(|p| Some((p.start?, p.end?)))
            .collect();
        ranges.sort_unstable();
        ranges.windows(2).any(|w| w[1].0 < w[0].1)
    }
}

/// Render a tuple as one proposition: components in start-offset order joined by spaces.
pub fn tuple_to_proposition(tuple: &ExtractionTuple, id: impl Into<String>) -> Result<Proposition> {
    if tuple.predicate.text.trim().is_empty() {
        return Err(Error::Invalid(
            "extraction tuple has an empty predicate".into(),
        ));
    }
    let mut parts = Vec::new();
    for part in tuple.parts() {
        match (part.start, part.end) {
            (Some(start), Some(end)) => parts.push((start, end, part.text.as_str())),
            _ => {
                return Err(Error::Invalid(format!(
                    "tuple component {:?} has no offsets",
                    part.text
                )))
            }
        }
    }
    parts.sort_by_key(|&(start, end, _)| (start, end));
    let text = normalize_whitespace(
        &parts
            .iter()
            .map(|(_, _, t)| *t)
            .collect::<Vec<_>>()
            .join(" "),
    );
    let lo = parts.iter().map(|p| p.0).min().expect("predicate present");
    let hi = parts.iter().map(|p| p.1).max().expect("predicate present");
    Ok(Proposition::new(id, text).with_span(lo, hi))
}

#[derive(Debug, Deserialize)]
struct TupleRecord {
    #[serde(default)]
    topic_id: Option<String>,
    unit_id: String,
    #[serde(flatten)]
    tuple: ExtractionTuple,
}

/// Extraction tuples grouped by the unit they were extracted from.
#[derive(Debug, Default, Clone)]
pub struct TupleSidecar {
    by_unit: HashMap<(Option<String>, String), Vec<ExtractionTuple>>,
}

impl TupleSidecar {
    /// Read one tuple per line. A line may scope its `unit_id` with a `topic_id`.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut sidecar = TupleSidecar::default();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TupleRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
                line: n + 1,
                message: e.to_string().replace('`', ""),
            })?;
            sidecar
                .by_unit
                .entry((record.topic_id, record.unit_id))
                .or_default()
                .push(record.tuple);
        }
        Ok(sidecar)
    }

    pub fn tuples(&self, topic_id: &str, unit_id: &str) -> &[ExtractionTuple] {
        self.by_unit
            .get(&(Some(topic_id.to_string()), unit_id.to_string()))
            .or_else(|| self.by_unit.get(&(None, unit_id.to_string())))
            .map_or(&[], Vec::as_slice)
    }
}

/// Fills in missing propositions according to an [`ExtractorConfig`].
#[derive(Debug, Clone)]
pub struct Extractor {
    config: ExtractorConfig,
    sidecar: Option<TupleSidecar>,
}

impl Extractor {
    pub fn new(config: ExtractorConfig) -> Result<Self> {
        config.validate()?;
        let sidecar = match &config.mode {
            ExtractionMode::External(path) => Some(TupleSidecar::load(path)?),
            _ => None,
        };
        Ok(Extractor { config, sidecar })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    fn extract(
        &self,
        topic_id: &str,
        unit_id: &str,
        text: Option<&str>,
    ) -> Result<Vec<Proposition>> {
        match &self.config.mode {
            ExtractionMode::Sentence => {
                let text = text.ok_or_else(|| {
                    Error::Invalid(format!(
                        "topic {topic_id}: unit {unit_id} has no text to split"
                    ))
                })?;
                Ok(extract_sentences(text, &self.config))
            }
            ExtractionMode::Precomputed => Err(Error::Invalid(format!(
                "topic {topic_id}: unit {unit_id} has no propositions"
            ))),
            ExtractionMode::External(_) => {
                let sidecar = self.sidecar.as_ref().expect("loaded in new");
                sidecar
                    .tuples(topic_id, unit_id)
                    .iter()
                    .enumerate()
                    .map(|(i, tuple)| tuple_to_proposition(tuple, format!("o{i}")))
                    .collect()
            }
        }
    }

    /// Give every unit without propositions a freshly extracted list.
    pub fn ensure(&self, topic: &Topic) -> Result<Topic> {
        let mut out = topic.clone();
        for doc in &mut out.documents {
            if doc.propositions.is_none() {
                doc.propositions =
                    Some(self.extract(&topic.topic_id, &doc.doc_id, doc.text.as_deref())?);
            }
        }
        for summary in &mut out.summaries {
            if summary.propositions.is_none() {
                summary.propositions = Some(self.extract(
                    &topic.topic_id,
                    &summary.summary_id,
                    summary.text.as_deref(),
                )?);
            }
        }
        out.bind();
        out.validate()?;
        Ok(out)
    }
}

/// One-shot form of [`Extractor::ensure`].
pub fn ensure_propositions(topic: &Topic, config: &ExtractorConfig) -> Result<Topic> {
    Extractor::new(config.clone())?.ensure(topic)
}

//! Domain types shared by the whole pipeline.
//!
//! Everything here is plain data: topics with their documents and summaries,
//! propositions, scored alignments, and the curves and reports computed from
//! them. Serialization shapes double as the canonical interchange format read
//! and written by [`crate::ingest`].

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Collapse every run of whitespace to a single space and trim both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A minimal information unit extracted from a summary or a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposition {
    pub id: String,
    pub text: String,
    /// Character offsets `(start, end)` into the owning unit's raw text.
    #[serde(rename = "span", default, skip_serializing_if = "Option::is_none")]
    pub char_span: Option<(usize, usize)>,
    /// Id of the owning document or summary. Filled in when a topic is bound.
    #[serde(skip)]
    pub source_unit: String,
}

impl Proposition {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Proposition {
            id: id.into(),
            text: text.into(),
            char_span: None,
            source_unit: String::new(),
        }
    }

    pub fn with_span(mut self, start: usize, end: usize) -> Self {
        self.char_span = Some((start, end));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    /// Position in topic ingestion order.
    #[serde(skip)]
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propositions: Option<Vec<Proposition>>,
}

impl Document {
    pub fn from_text(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            index: 0,
            text: Some(text.into()),
            propositions: None,
        }
    }

    pub fn from_propositions(doc_id: impl Into<String>, propositions: Vec<Proposition>) -> Self {
        Document {
            doc_id: doc_id.into(),
            index: 0,
            text: None,
            propositions: Some(propositions),
        }
    }

    pub fn propositions(&self) -> &[Proposition] {
        self.propositions.as_deref().unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryKind {
    Reference,
    System,
}

impl fmt::Display for SummaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SummaryKind::Reference => f.write_str("reference"),
            SummaryKind::System => f.write_str("system"),
        }
    }
}

impl std::str::FromStr for SummaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(SummaryKind::Reference),
            "system" => Ok(SummaryKind::System),
            other => Err(Error::Invalid(format!("unknown summary kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub summary_id: String,
    pub kind: SummaryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propositions: Option<Vec<Proposition>>,
}

impl Summary {
    pub fn reference(summary_id: impl Into<String>, propositions: Vec<Proposition>) -> Self {
        Summary {
            summary_id: summary_id.into(),
            kind: SummaryKind::Reference,
            system_name: None,
            text: None,
            propositions: Some(propositions),
        }
    }

    pub fn propositions(&self) -> &[Proposition] {
        self.propositions.as_deref().unwrap_or(&[])
    }
}

/// One evaluation unit: ordered source documents plus their summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: String,
    pub documents: Vec<Document>,
    pub summaries: Vec<Summary>,
}

impl Topic {
    /// Build a topic, assigning document indices and proposition owners, then validate it.
    pub fn new(
        topic_id: impl Into<String>,
        documents: Vec<Document>,
        summaries: Vec<Summary>,
    ) -> Result<Self> {
        let mut topic = Topic {
            topic_id: topic_id.into(),
            documents,
            summaries,
        };
        topic.bind();
        topic.validate()?;
        Ok(topic)
    }

    /// Re-derive the fields that are implied by position and ownership.
    pub fn bind(&mut self) {
        for (index, doc) in self.documents.iter_mut().enumerate() {
            doc.index = index;
            for prop in doc.propositions.iter_mut().flatten() {
                prop.source_unit = doc.doc_id.clone();
            }
        }
        for summary in &mut self.summaries {
            for prop in summary.propositions.iter_mut().flatten() {
                prop.source_unit = summary.summary_id.clone();
            }
        }
    }

    pub fn n_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn summary(&self, summary_id: &str) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.summary_id == summary_id)
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Check every structural invariant of a topic in a single pass.
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Error::Invalid(format!("topic {}: {msg}", self.topic_id));
        if self.documents.is_empty() {
            return Err(invalid("no documents".into()));
        }
        if self.summaries.is_empty() {
            return Err(invalid("no summaries".into()));
        }
        let mut doc_ids = HashSet::new();
        for (position, doc) in self.documents.iter().enumerate() {
            if !doc_ids.insert(doc.doc_id.as_str()) {
                return Err(invalid(format!("duplicate doc_id {}", doc.doc_id)));
            }
            if doc.index != position {
                return Err(invalid(format!(
                    "document {} has index {} at position {position}",
                    doc.doc_id, doc.index
                )));
            }
            check_unit(
                &doc.doc_id,
                doc.text.as_deref(),
                doc.propositions.as_deref(),
            )
            .map_err(invalid)?;
        }
        let mut summary_ids = HashSet::new();
        for summary in &self.summaries {
            if !summary_ids.insert(summary.summary_id.as_str()) {
                return Err(invalid(format!(
                    "duplicate summary_id {}",
                    summary.summary_id
                )));
            }
            check_unit(
                &summary.summary_id,
                summary.text.as_deref(),
                summary.propositions.as_deref(),
            )
            .map_err(invalid)?;
        }
        Ok(())
    }
}

fn check_unit(
    unit_id: &str,
    text: Option<&str>,
    propositions: Option<&[Proposition]>,
) -> std::result::Result<(), String> {
    if text.is_none() && propositions.is_none() {
        return Err(format!("unit {unit_id} has neither text nor propositions"));
    }
    let mut ids = HashSet::new();
    for prop in propositions.unwrap_or(&[]) {
        if !ids.insert(prop.id.as_str()) {
            return Err(format!(
                "unit {unit_id}: duplicate proposition id {}",
                prop.id
            ));
        }
        if prop.text.trim().is_empty() {
            return Err(format!(
                "unit {unit_id}: proposition {} has empty text",
                prop.id
            ));
        }
        if let Some((start, end)) = prop.char_span {
            if start > end {
                return Err(format!(
                    "unit {unit_id}: proposition {} has inverted span",
                    prop.id
                ));
            }
        }
    }
    Ok(())
}

/// A scored edge from a summary proposition to a document proposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEdge {
    pub summary_prop: String,
    pub doc_id: String,
    pub doc_prop: String,
    pub score: f64,
}

/// All scored pairs for one (topic, summary); the binary relation is `score >= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRelation {
    pub topic_id: String,
    pub summary_id: String,
    pub edges: Vec<AlignmentEdge>,
    pub threshold: f64,
    pub scorer_id: String,
}

impl AlignmentRelation {
    pub fn is_aligned(&self, edge: &AlignmentEdge) -> bool {
        edge.score >= self.threshold
    }

    pub fn aligned_edges(&self) -> impl Iterator<Item = &AlignmentEdge> {
        self.edges.iter().filter(move |e| self.is_aligned(e))
    }

    /// Verify that every referenced proposition exists in `topic`.
    pub fn check_against(&self, topic: &Topic) -> Result<()> {
        if topic.topic_id != self.topic_id {
            return Err(Error::Mismatch(format!(
                "relation for topic {} applied to topic {}",
                self.topic_id, topic.topic_id
            )));
        }
        let summary = topic.summary(&self.summary_id).ok_or_else(|| {
            Error::UnknownReference(format!(
                "topic {}: no summary {}",
                self.topic_id, self.summary_id
            ))
        })?;
        let summary_props: HashSet<&str> = summary
            .propositions()
            .iter()
            .map(|p| p.id.as_str())
            .collect();
        for edge in &self.edges {
            if !summary_props.contains(edge.summary_prop.as_str()) {
                return Err(Error::UnknownReference(format!(
                    "topic {} summary {}: unknown summary proposition {}",
                    self.topic_id, self.summary_id, edge.summary_prop
                )));
            }
            let doc = topic.document(&edge.doc_id).ok_or_else(|| {
                Error::UnknownReference(format!(
                    "topic {}: unknown document {}",
                    self.topic_id, edge.doc_id
                ))
            })?;
            if !doc.propositions().iter().any(|p| p.id == edge.doc_prop) {
                return Err(Error::UnknownReference(format!(
                    "topic {} document {}: unknown proposition {}",
                    self.topic_id, edge.doc_id, edge.doc_prop
                )));
            }
        }
        Ok(())
    }
}

/// Greedy document order and `cov_k` for `k = 1..=n` of one (topic, summary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub topic_id: String,
    pub summary_id: String,
    pub greedy_order: Vec<usize>,
    pub cov: Vec<f64>,
    /// Number of summary propositions covered by all documents together.
    pub denominator: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicResult {
    pub topic_id: String,
    pub summary_id: String,
    pub n_docs: usize,
    pub curve: CoverageCurve,
    /// Area above the curve, percent scale. Zero for skipped units.
    pub aac: f64,
    /// Set when the unit could not be scored (no summary proposition is covered).
    pub skipped: Option<String>,
}

impl TopicResult {
    pub fn is_skipped(&self) -> bool {
        self.skipped.is_some()
    }
}

/// Descriptive metadata carried alongside a report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMeta {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_kind: Option<SummaryKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor_id: Option<String>,
}

/// Dataset-level aggregation of per-unit results.
///
/// `topics_evaluated` and `topics_skipped` count (topic, summary) units, so they
/// always add up to the number of rows in `per_topic.csv`. `per_topic_aac`
/// holds one value per topic, averaged over that topic's scored summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    #[serde(default)]
    pub meta: ReportMeta,
    /// AAC values are percentages.
    pub aac_scale: String,
    pub n_max: usize,
    pub aggregate_cov: Vec<f64>,
    pub dataset_aac: f64,
    pub per_topic_aac: Vec<f64>,
    pub aac_mean: f64,
    pub aac_std: f64,
    pub topics_evaluated: usize,
    pub topics_skipped: usize,
}

/// The documents kept for one topic when reducing it to `k` documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetTrace {
    pub topic_id: String,
    pub summary_id: String,
    pub k: usize,
    pub doc_ids: Vec<String>,
    pub coverage: f64,
    pub fallback: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, props: &[(&str, &str)]) -> Document {
        Document::from_propositions(
            id,
            props
                .iter()
                .map(|(i, t)| Proposition::new(*i, *t))
                .collect(),
        )
    }

    #[test]
    fn new_topic_binds_indices_and_owners() {
        let topic = Topic::new(
            "t",
            vec![doc("a", &[("q0", "x")]), doc("b", &[("q0", "y")])],
            vec![Summary::reference("s", vec![Proposition::new("p0", "x")])],
        )
        .unwrap();
        assert_eq!(topic.documents[1].index, 1);
        assert_eq!(topic.documents[1].propositions()[0].source_unit, "b");
        assert_eq!(topic.summaries[0].propositions()[0].source_unit, "s");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = Topic::new(
            "t",
            vec![doc("a", &[]), doc("a", &[])],
            vec![Summary::reference("s", vec![])],
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate doc_id a"));

        let err = Topic::new(
            "t",
            vec![doc("a", &[("q", "x"), ("q", "y")])],
            vec![Summary::reference("s", vec![])],
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate proposition id q"));
    }

    #[test]
    fn unit_needs_text_or_propositions() {
        let bare = Document {
            doc_id: "a".into(),
            index: 0,
            text: None,
            propositions: None,
        };
        let err = Topic::new("t", vec![bare], vec![Summary::reference("s", vec![])]).unwrap_err();
        assert!(err.to_string().contains("neither text nor propositions"));
    }

    #[test]
    fn blank_proposition_text_is_invalid() {
        let err = Topic::new(
            "t",
            vec![doc("a", &[("q", " \t ")])],
            vec![Summary::reference("s", vec![])],
        )
        .unwrap_err();
        assert!(err.to_string().contains("empty text"));
    }

    #[test]
    fn relation_check_finds_unknown_props() {
        let topic = Topic::new(
            "t",
            vec![doc("d0", &[("q0", "x")])],
            vec![Summary::reference("s", vec![Proposition::new("p0", "x")])],
        )
        .unwrap();
        let mut rel = AlignmentRelation {
            topic_id: "t".into(),
            summary_id: "s".into(),
            edges: vec![AlignmentEdge {
                summary_prop: "p0".into(),
                doc_id: "d0".into(),
                doc_prop: "q0".into(),
                score: 0.9,
            }],
            threshold: 0.5,
            scorer_id: "test".into(),
        };
        rel.check_against(&topic).unwrap();
        rel.edges[0].doc_prop = "q9".into();
        assert!(matches!(
            rel.check_against(&topic),
            Err(Error::UnknownReference(_))
        ));
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_whitespace("  a \n b\tc "), "a b c");
    }
}

//! Reduce every topic to its `k` maximally-covering documents.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::coverage::{greedy_curve, BinaryCoverageMap};
use crate::error::{Error, Result};
use crate::ingest::{self, index_relations, DatasetManifest};
use crate::model::{AlignmentRelation, SubsetTrace, Summary, SummaryKind, Topic};

/// Which summary drives the selection.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SummarySelector {
    /// The first reference summary in ingestion order.
    #[default]
    Reference,
    /// The summary produced by this system (matched on `system_name`, then `summary_id`).
    System(String),
}

impl SummarySelector {
    pub fn select<'a>(&self, topic: &'a Topic) -> Result<&'a Summary> {
        let found = match self {
            SummarySelector::Reference => topic
                .summaries
                .iter()
                .find(|s| s.kind == SummaryKind::Reference),
            SummarySelector::System(name) => topic
                .summaries
                .iter()
                .find(|s| s.system_name.as_deref() == Some(name.as_str()))
                .or_else(|| topic.summary(name)),
        };
        found.ok_or_else(|| {
            Error::UnknownReference(format!(
                "topic {}: no summary matching {self:?}",
                topic.topic_id
            ))
        })
    }
}

/// The first `min(k, n)` documents of the greedy order for one summary.
///
/// Degenerate units (nothing covered) keep the first documents by index and are
/// marked as a fallback.
pub fn select_topic_subset(
    topic: &Topic,
    summary_id: &str,
    relation: &AlignmentRelation,
    k: usize,
) -> Result<SubsetTrace> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    if relation.summary_id != summary_id {
        return Err(Error::Mismatch(format!(
            "relation for summary {} used for {summary_id}",
            relation.summary_id
        )));
    }
    let map = BinaryCoverageMap::from_relation(topic, relation)?;
    let keep = k.min(topic.n_docs());
    let (order, coverage, fallback) = match greedy_curve(&map) {
        Ok(curve) => (
            curve.greedy_order[..keep].to_vec(),
            curve.cov[keep - 1],
            false,
        ),
        Err(Error::DegenerateTopic { .. }) => ((0..keep).collect(), 0.0, true),
        Err(e) => return Err(e),
    };
    Ok(SubsetTrace {
        topic_id: topic.topic_id.clone(),
        summary_id: summary_id.to_string(),
        k,
        doc_ids: order
            .iter()
            .map(|&d| topic.documents[d].doc_id.clone())
            .collect(),
        coverage,
        fallback,
    })
}

/// A copy of `topic` holding only the traced documents, in their original order.
pub fn reduce_topic(topic: &Topic, trace: &SubsetTrace) -> Result<Topic> {
    let keep: HashSet<&str> = trace.doc_ids.iter().map(String::as_str).collect();
    let mut reduced = Topic {
        topic_id: topic.topic_id.clone(),
        documents: topic
            .documents
            .iter()
            .filter(|d| keep.contains(d.doc_id.as_str()))
            .cloned()
            .collect(),
        summaries: topic.summaries.clone(),
    };
    reduced.bind();
    reduced.validate()?;
    Ok(reduced)
}

/// Where [`export_reduced_dataset`] writes its per-topic traces.
pub fn traces_path(out_path: &Path) -> PathBuf {
    ingest::sidecar(out_path, "traces.jsonl")
}

/// Write the reduced dataset to `out_path`, traces and a manifest next to it.
pub fn export_reduced_dataset(
    dataset: &[Topic],
    relations: &[AlignmentRelation],
    k: usize,
    out_path: &Path,
    selector: &SummarySelector,
) -> Result<DatasetManifest> {
    let index = index_relations(dataset, relations)?;
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(dataset.len());
    for topic in dataset {
        let summary = selector.select(topic)?;
        match index.get(&(topic.topic_id.as_str(), summary.summary_id.as_str())) {
            Some(relation) => pairs.push((topic, summary, *relation)),
            None => missing.push(topic.topic_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnknownReference(format!(
            "no alignments for topics: {}",
            missing.join(", ")
        )));
    }

    let mut traces = Vec::with_capacity(pairs.len());
    let mut reduced = Vec::with_capacity(pairs.len());
    for (topic, summary, relation) in pairs {
        let trace = select_topic_subset(topic, &summary.summary_id, relation, k)?;
        reduced.push(reduce_topic(topic, &trace)?);
        traces.push(trace);
    }

    ingest::write_dataset(out_path, &reduced)?;
    ingest::write_lines(&traces_path(out_path), &traces)?;
    let name = out_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let manifest = DatasetManifest::new(
        name,
        reduced.len(),
        format!("reduced to the {k} maximally-covering documents per topic ({selector:?} summary)"),
    );
    manifest.write(&DatasetManifest::path_for(out_path))?;
    Ok(manifest)
}

//! Dataset-level drivers shared by the command line and the Python bindings.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::align::{align_topic, ScoreCache, Scorer, ScorerSpec};
use crate::coverage::{aggregate, rethreshold, topic_result};
use crate::error::{Error, Result};
use crate::ingest::index_relations;
use crate::model::{AlignmentRelation, DatasetReport, ReportMeta, SummaryKind, Topic, TopicResult};
use crate::propositions::Extractor;

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start {jobs} workers: {e}")))
}

/// Fill in missing propositions and score every summary of every topic.
///
/// Output order follows the input (topics, then summaries) for any `jobs`.
pub fn align_dataset(
    topics: &[Topic],
    extractor: &Extractor,
    scorer: &dyn Scorer,
    cache: Option<&ScoreCache>,
    spec: &ScorerSpec,
    jobs: usize,
) -> Result<(Vec<Topic>, Vec<AlignmentRelation>)> {
    let jobs = if scorer.concurrent() { jobs } else { 1 };
    let per_topic: Vec<(Topic, Vec<AlignmentRelation>)> = pool(jobs)?.install(|| {
        topics
            .par_iter()
            .map(|topic| {
                let topic = extractor.ensure(topic)?;
                let relations = topic
                    .summaries
                    .iter()
                    .map(|s| align_topic(&topic, &s.summary_id, scorer, cache, spec))
                    .collect::<Result<Vec<_>>>()?;
                Ok((topic, relations))
            })
            .collect::<Result<_>>()
    })?;
    let mut out_topics = Vec::with_capacity(per_topic.len());
    let mut relations = Vec::new();
    for (topic, rels) in per_topic {
        out_topics.push(topic);
        relations.extend(rels);
    }
    Ok((out_topics, relations))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOptions {
    pub n_max: usize,
    /// Binarization threshold applied to every relation.
    pub tau: f64,
    pub summary_kind: SummaryKind,
    pub jobs: usize,
    /// Report name prefix, usually the dataset name.
    pub name: String,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            n_max: crate::coverage::DEFAULT_N_MAX,
            tau: crate::align::DEFAULT_THRESHOLD,
            summary_kind: SummaryKind::Reference,
            jobs: 1,
            name: "dataset".into(),
        }
    }
}

/// Scores of one summary group: all references, or one system's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    /// `reference`, or the system name.
    pub group: String,
    pub report: DatasetReport,
    pub results: Vec<TopicResult>,
}

/// Score every summary of the requested kind, one report per group.
///
/// System summaries are grouped by `system_name` (falling back to
/// `summary_id`), groups sorted by name. Summaries without alignment lines are
/// scored with an empty relation and end up skipped.
pub fn score_dataset(
    topics: &[Topic],
    relations: &[AlignmentRelation],
    options: &ScoreOptions,
) -> Result<Vec<GroupReport>> {
    let index = index_relations(topics, relations)?;
    let mut groups: BTreeMap<String, Vec<(&Topic, &str)>> = BTreeMap::new();
    for topic in topics {
        for summary in topic
            .summaries
            .iter()
            .filter(|s| s.kind == options.summary_kind)
        {
            let group = match options.summary_kind {
                SummaryKind::Reference => "reference".to_string(),
                SummaryKind::System => summary
                    .system_name
                    .clone()
                    .unwrap_or_else(|| summary.summary_id.clone()),
            };
            groups
                .entry(group)
                .or_default()
                .push((topic, summary.summary_id.as_str()));
        }
    }
    if groups.is_empty() {
        return Err(Error::Invalid(format!(
            "dataset has no {} summaries",
            options.summary_kind
        )));
    }

    let workers = pool(options.jobs)?;
    let mut reports = Vec::with_capacity(groups.len());
    for (group, units) in groups {
        let mut scorers = BTreeSet::new();
        let results: Vec<TopicResult> = workers.install(|| {
            units
                .par_iter()
                .map(|&(topic, summary_id)| {
                    let relation = match index.get(&(topic.topic_id.as_str(), summary_id)) {
                        Some(r) => rethreshold(r, options.tau)?,
                        None => AlignmentRelation {
                            topic_id: topic.topic_id.clone(),
                            summary_id: summary_id.to_string(),
                            edges: Vec::new(),
                            threshold: options.tau,
                            scorer_id: String::new(),
                        },
                    };
                    topic_result(topic, summary_id, &relation, options.n_max)
                })
                .collect::<Result<_>>()
        })?;
        for (topic, summary_id) in &units {
            if let Some(r) = index.get(&(topic.topic_id.as_str(), *summary_id)) {
                scorers.insert(r.scorer_id.as_str());
            }
        }
        let mut report = aggregate(&results, options.n_max)?;
        report.meta = ReportMeta {
            name: format!("{}/{group}", options.name),
            summary_kind: Some(options.summary_kind),
            system_name: (options.summary_kind == SummaryKind::System).then(|| group.clone()),
            tau: Some(options.tau),
            scorer_id: (!scorers.is_empty())
                .then(|| scorers.into_iter().collect::<Vec<_>>().join(",")),
            extractor_id: None,
        };
        reports.push(GroupReport {
            group,
            report,
            results,
        });
    }
    Ok(reports)
}

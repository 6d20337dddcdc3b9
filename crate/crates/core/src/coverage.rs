//! Coverage of a summary by subsets of its source documents.
//!
//! A summary proposition is covered by a document when at least one of the
//! document's propositions is aligned to it. The absolute coverage of a document
//! subset is the number of summary propositions covered by any member; relative
//! coverage divides that by the absolute coverage of the whole document set, so
//! summary content that no document supports drops out of the measure.
//!
//! For every size `k` the greedily built maximally-covering subset gives
//! `cov_k`; the area above that (non-interpolated) curve, normalized by
//! `n_max` and expressed in percent, is the dispersion score.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use itertools::Itertools;

use crate::error::{Error, Result};
use crate::model::{
    AlignmentRelation, CoverageCurve, DatasetReport, ReportMeta, Topic, TopicResult,
};

/// Normalization constant used when none is configured.
pub const DEFAULT_N_MAX: usize = 10;

/// Largest number of subsets [`exact_best_coverage`] will enumerate by default.
pub const DEFAULT_ENUMERATION_CAP: u128 = 2_000_000;

pub(crate) fn check_unit_interval(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Invalid(format!(
            "{name} must be in [0, 1], got {value}"
        )));
    }
    Ok(())
}

fn check_n_max(n_max: usize) -> Result<()> {
    if n_max == 0 {
        return Err(Error::Invalid("n_max must be at least 1".into()));
    }
    Ok(())
}

/// Which summary propositions each document covers, for one (topic, summary).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCoverageMap {
    pub topic_id: String,
    pub summary_id: String,
    /// Summary proposition ids; bit `i` of a cover set refers to `prop_ids[i]`.
    prop_ids: Vec<String>,
    covers: Vec<FixedBitSet>,
    denominator: usize,
}

impl BinaryCoverageMap {
    /// Build a map from explicit cover sets of summary-proposition indices.
    pub fn from_sets(n_props: usize, sets: &[Vec<usize>]) -> Result<Self> {
        let mut covers = Vec::with_capacity(sets.len());
        for (doc, set) in sets.iter().enumerate() {
            let mut bits = FixedBitSet::with_capacity(n_props);
            for &p in set {
                if p >= n_props {
                    return Err(Error::Invalid(format!(
                        "document {doc} covers proposition {p}, but there are only {n_props}"
                    )));
                }
                bits.insert(p);
            }
            covers.push(bits);
        }
        Ok(Self::from_bits(
            String::new(),
            String::new(),
            (0..n_props).map(|i| format!("p{i}")).collect(),
            covers,
        ))
    }

    /// Binarize `relation` at its threshold against the propositions of `topic`.
    pub fn from_relation(topic: &Topic, relation: &AlignmentRelation) -> Result<Self> {
        relation.check_against(topic)?;
        let summary = topic
            .summary(&relation.summary_id)
            .expect("checked by check_against");
        let prop_ids: Vec<String> = summary
            .propositions()
            .iter()
            .map(|p| p.id.clone())
            .collect();
        let prop_index: HashMap<&str, usize> = prop_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let doc_index: HashMap<&str, usize> = topic
            .documents
            .iter()
            .map(|d| (d.doc_id.as_str(), d.index))
            .collect();
        let mut covers = vec![FixedBitSet::with_capacity(prop_ids.len()); topic.n_docs()];
        for edge in relation.aligned_edges() {
            covers[doc_index[edge.doc_id.as_str()]].insert(prop_index[edge.summary_prop.as_str()]);
        }
        Ok(Self::from_bits(
            relation.topic_id.clone(),
            relation.summary_id.clone(),
            prop_ids,
            covers,
        ))
    }

    fn from_bits(
        topic_id: String,
        summary_id: String,
        prop_ids: Vec<String>,
        covers: Vec<FixedBitSet>,
    ) -> Self {
        let mut union = FixedBitSet::with_capacity(prop_ids.len());
        for c in &covers {
            union.union_with(c);
        }
        BinaryCoverageMap {
            topic_id,
            summary_id,
            prop_ids,
            covers,
            denominator: union.count_ones(..),
        }
    }

    pub fn with_ids(mut self, topic_id: impl Into<String>, summary_id: impl Into<String>) -> Self {
        self.topic_id = topic_id.into();
        self.summary_id = summary_id.into();
        self
    }

    pub fn n_docs(&self) -> usize {
        self.covers.len()
    }

    pub fn n_props(&self) -> usize {
        self.prop_ids.len()
    }

    /// `s(D, S)`: summary propositions covered by the union of all documents.
    pub fn denominator(&self) -> usize {
        self.denominator
    }

    /// Ids of the summary propositions covered by document `doc`.
    pub fn covered_ids(&self, doc: usize) -> Vec<&str> {
        self.covers[doc]
            .ones()
            .map(|i| self.prop_ids[i].as_str())
            .collect()
    }

    fn degenerate(&self) -> Error {
        Error::DegenerateTopic {
            topic_id: self.topic_id.clone(),
            summary_id: self.summary_id.clone(),
        }
    }

    fn union_of(&self, subset: &[usize]) -> Result<FixedBitSet> {
        let mut union = FixedBitSet::with_capacity(self.n_props());
        for &d in subset {
            let cover = self.covers.get(d).ok_or_else(|| {
                Error::Invalid(format!(
                    "document index {d} out of range for {} documents",
                    self.n_docs()
                ))
            })?;
            union.union_with(cover);
        }
        Ok(union)
    }
}

/// Number of summary propositions covered by at least one document of `subset`.
pub fn absolute_coverage(map: &BinaryCoverageMap, subset: &[usize]) -> Result<usize> {
    Ok(map.union_of(subset)?.count_ones(..))
}

/// Absolute coverage of `subset` divided by that of all documents.
pub fn relative_coverage(map: &BinaryCoverageMap, subset: &[usize]) -> Result<f64> {
    if map.denominator == 0 {
        return Err(map.degenerate());
    }
    Ok(absolute_coverage(map, subset)? as f64 / map.denominator as f64)
}

/// Order all documents by greedy marginal coverage gain and record `cov_k`.
///
/// Ties go to the lowest document index, so documents that add nothing end up
/// appended in index order once the union is complete.
pub fn greedy_curve(map: &BinaryCoverageMap) -> Result<CoverageCurve> {
    if map.denominator == 0 {
        return Err(map.degenerate());
    }
    let n = map.n_docs();
    let mut covered = FixedBitSet::with_capacity(map.n_props());
    let mut available = vec![true; n];
    let mut order = Vec::with_capacity(n);
    let mut cov = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(usize, usize)> = None;
        for d in (0..n).filter(|&d| available[d]) {
            let gain = map.covers[d].difference_count(&covered);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((d, gain));
            }
        }
        let (doc, _) = best.expect("a document remains on every step");
        available[doc] = false;
        covered.union_with(&map.covers[doc]);
        order.push(doc);
        cov.push(covered.count_ones(..) as f64 / map.denominator as f64);
    }
    Ok(CoverageCurve {
        topic_id: map.topic_id.clone(),
        summary_id: map.summary_id.clone(),
        greedy_order: order,
        cov,
        denominator: map.denominator,
    })
}

/// `C(n, k)` or `None` on overflow.
fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Best size-`k` subset by exhaustive enumeration, with the default cap.
pub fn exact_best_coverage(map: &BinaryCoverageMap, k: usize) -> Result<(Vec<usize>, f64)> {
    exact_best_coverage_capped(map, k, DEFAULT_ENUMERATION_CAP)
}

/// Enumerate every size-`k` subset and return the best one and its relative coverage.
///
/// Ties resolve to the lexicographically smallest index tuple. Refuses to run when
/// the number of subsets exceeds `cap`.
pub fn exact_best_coverage_capped(
    map: &BinaryCoverageMap,
    k: usize,
    cap: u128,
) -> Result<(Vec<usize>, f64)> {
    let n = map.n_docs();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("subset size {k} not in 1..={n}")));
    }
    if map.denominator == 0 {
        return Err(map.degenerate());
    }
    let combinations = binomial(n, k).unwrap_or(u128::MAX);
    if combinations > cap {
        return Err(Error::CapExceeded { combinations, cap });
    }
    let mut best: Option<(Vec<usize>, usize)> = None;
    let mut union = FixedBitSet::with_capacity(map.n_props());
    for subset in (0..n).combinations(k) {
        union.clear();
        for &d in &subset {
            union.union_with(&map.covers[d]);
        }
        let count = union.count_ones(..);
        if best.as_ref().is_none_or(|(_, c)| count > *c) {
            best = Some((subset, count));
        }
    }
    let (subset, count) = best.expect("at least one subset");
    Ok((subset, count as f64 / map.denominator as f64))
}

/// Area above a non-interpolated coverage curve, in percent of `n_max`.
pub fn aac_percent(cov: &[f64], n_max: usize) -> f64 {
    let area: f64 = cov.iter().map(|c| 1.0 - c).sum();
    100.0 / n_max as f64 * area
}

/// Score one (topic, summary) unit; units with nothing covered come back skipped.
pub fn topic_result(
    topic: &Topic,
    summary_id: &str,
    relation: &AlignmentRelation,
    n_max: usize,
) -> Result<TopicResult> {
    check_n_max(n_max)?;
    if relation.topic_id != topic.topic_id || relation.summary_id != summary_id {
        return Err(Error::Mismatch(format!(
            "relation for {}/{} used for {}/{}",
            relation.topic_id, relation.summary_id, topic.topic_id, summary_id
        )));
    }
    let map = BinaryCoverageMap::from_relation(topic, relation)?;
    Ok(result_from_map(&map, n_max))
}

/// Score a prebuilt coverage map. Degenerate maps yield a skipped result.
pub fn result_from_map(map: &BinaryCoverageMap, n_max: usize) -> TopicResult {
    let base = TopicResult {
        topic_id: map.topic_id.clone(),
        summary_id: map.summary_id.clone(),
        n_docs: map.n_docs(),
        curve: CoverageCurve {
            topic_id: map.topic_id.clone(),
            summary_id: map.summary_id.clone(),
            greedy_order: Vec::new(),
            cov: Vec::new(),
            denominator: 0,
        },
        aac: 0.0,
        skipped: None,
    };
    match greedy_curve(map) {
        Ok(curve) => TopicResult {
            aac: aac_percent(&curve.cov, n_max),
            curve,
            ..base
        },
        Err(_) => TopicResult {
            skipped: Some("no summary proposition is aligned to any document".into()),
            ..base
        },
    }
}

/// Extend a curve to length `len` with ones (the curve has already reached 1).
fn extended(cov: &[f64], len: usize) -> impl Iterator<Item = f64> + '_ {
    cov.iter().copied().chain(std::iter::repeat(1.0)).take(len)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Average per-unit results into a dataset report.
///
/// Curves of topics with fewer documents than the largest topic are padded with
/// `cov_k = 1`, which makes the dataset AAC equal to the mean per-topic AAC.
/// Multiple summaries of one topic are averaged before averaging over topics.
pub fn aggregate(results: &[TopicResult], n_max: usize) -> Result<DatasetReport> {
    check_n_max(n_max)?;
    let scored: Vec<&TopicResult> = results.iter().filter(|r| !r.is_skipped()).collect();
    if scored.is_empty() {
        return Err(Error::AllSkipped);
    }
    let width = scored.iter().map(|r| r.curve.cov.len()).max().unwrap_or(0);

    // topics in first-seen order
    let mut slot_of: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<&TopicResult>> = Vec::new();
    for r in &scored {
        let slot = *slot_of.entry(r.topic_id.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(r);
    }

    let mut curve_sum = vec![0.0; width];
    let mut per_topic_aac = Vec::with_capacity(groups.len());
    for members in &groups {
        let share = members.len() as f64;
        for r in members {
            for (slot, c) in curve_sum.iter_mut().zip(extended(&r.curve.cov, width)) {
                *slot += c / share;
            }
        }
        per_topic_aac.push(members.iter().map(|r| r.aac).sum::<f64>() / share);
    }
    let topics = groups.len() as f64;
    let aggregate_cov: Vec<f64> = curve_sum.iter().map(|s| s / topics).collect();
    let aac_mean = mean(&per_topic_aac);
    let variance = per_topic_aac
        .iter()
        .map(|a| (a - aac_mean).powi(2))
        .sum::<f64>()
        / topics;
    Ok(DatasetReport {
        meta: ReportMeta::default(),
        aac_scale: "percent".into(),
        n_max,
        dataset_aac: aac_percent(&aggregate_cov, n_max),
        aggregate_cov,
        per_topic_aac,
        aac_mean,
        aac_std: variance.sqrt(),
        topics_evaluated: scored.len(),
        topics_skipped: results.len() - scored.len(),
    })
}

/// Same scored pairs under a new threshold.
pub fn rethreshold(relation: &AlignmentRelation, threshold: f64) -> Result<AlignmentRelation> {
    check_unit_interval("threshold", threshold)?;
    Ok(AlignmentRelation {
        threshold,
        ..relation.clone()
    })
}

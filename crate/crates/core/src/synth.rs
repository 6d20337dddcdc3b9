//! Synthetic datasets whose coverage curves are known in advance.
//!
//! Every summary proposition is a string of tokens that occur nowhere else in
//! its topic. A document covers a proposition by carrying an exact copy of it,
//! so the lexical scorer reproduces the designed relation exactly: designed
//! pairs score 1 and all other pairs score 0.
//!
//! The expected report is computed here from the design itself, independently
//! of [`crate::coverage`].

use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{self, AlignmentMeta, DatasetManifest};
use crate::model::{
    AlignmentEdge, AlignmentRelation, DatasetReport, Document, Proposition, ReportMeta, Summary,
    Topic,
};

pub const SYNTHETIC_SCORER: &str = "synthetic";

#[derive(Debug, Clone, PartialEq)]
pub enum CoverageDesign {
    /// Document 0 covers every proposition; the others cover none.
    SingleDoc,
    /// Proposition `j` is covered only by document `j mod n`.
    DisjointUniform,
    /// Each proposition is covered by one document drawn with weight `p (1 - p)^d`.
    Geometric(f64),
    /// Every (document, proposition) pair is an edge with this probability.
    Random(f64),
    /// Row `d`, column `j` says whether document `d` covers proposition `j`.
    Custom(Vec<Vec<bool>>),
}

impl CoverageDesign {
    pub fn name(&self) -> &'static str {
        match self {
            CoverageDesign::SingleDoc => "single_doc",
            CoverageDesign::DisjointUniform => "disjoint_uniform",
            CoverageDesign::Geometric(_) => "geometric",
            CoverageDesign::Random(_) => "random",
            CoverageDesign::Custom(_) => "custom",
        }
    }

    /// Parse rows of `0`/`1` separated by `;`, e.g. `"110;011"`.
    pub fn parse_matrix(text: &str) -> Result<Self> {
        let rows: Vec<Vec<bool>> = text
            .split(';')
            .map(|row| {
                row.trim()
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::Invalid(format!(
                            "matrix cell {other:?} is not 0 or 1"
                        ))),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(CoverageDesign::Custom(rows))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub topics: usize,
    /// Documents per topic (the upper bound when `vary_docs` is set).
    pub n_docs: usize,
    /// Summary propositions per topic.
    pub n_props: usize,
    pub design: CoverageDesign,
    pub seed: u64,
    pub n_max: usize,
    /// Draw each topic's document count uniformly from `1..=n_docs`.
    pub vary_docs: bool,
}

impl SynthConfig {
    pub fn new(design: CoverageDesign, topics: usize, n_docs: usize, n_props: usize) -> Self {
        SynthConfig {
            topics,
            n_docs,
            n_props,
            design,
            seed: 0,
            n_max: crate::coverage::DEFAULT_N_MAX,
            vary_docs: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Nine four-document topics where the best single document covers 70% of the
    /// summary and the best pair covers 95%.
    pub fn motivating_replica() -> Self {
        // 20 propositions: d0 covers 0..14, d1 covers 14..19, d2 covers 19, d3 repeats 0..4
        let row = |range: std::ops::Range<usize>| (0..20).map(|j| range.contains(&j)).collect();
        let matrix = vec![row(0..14), row(14..19), row(19..20), row(0..4)];
        SynthConfig::new(CoverageDesign::Custom(matrix), 9, 4, 20)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.topics == 0 {
            return invalid("need at least one topic");
        }
        if self.n_docs == 0 || self.n_props == 0 {
            return invalid("need at least one document and one proposition per topic");
        }
        if self.n_max == 0 {
            return invalid("n_max must be at least 1");
        }
        match &self.design {
            CoverageDesign::Geometric(p) if !(*p > 0.0 && *p < 1.0) => {
                invalid("geometric p must be in (0, 1)")
            }
            CoverageDesign::Random(p) if !(0.0..=1.0).contains(p) => {
                invalid("random density must be in [0, 1]")
            }
            CoverageDesign::Custom(rows) => {
                if self.vary_docs {
                    return invalid("a custom matrix fixes the number of documents");
                }
                if rows.len() != self.n_docs || rows.iter().any(|r| r.len() != self.n_props) {
                    return invalid("custom matrix must have n_docs rows of n_props cells");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// A generated dataset with its designed alignments and the report it should produce.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Vec<Topic>,
    pub alignments: Vec<AlignmentRelation>,
    pub expected: DatasetReport,
    /// Cover sets per topic: for each document, the covered proposition indices.
    pub designs: Vec<Vec<Vec<usize>>>,
}

/// Paths written by [`SynthOutput::write`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub dataset: PathBuf,
    pub alignments: PathBuf,
    pub expected: PathBuf,
}

impl SynthOutput {
    /// Write `dataset.jsonl` (with manifest), `alignments.jsonl` and `expected.json`.
    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        let files = SynthFiles {
            dataset: dir.join("dataset.jsonl"),
            alignments: dir.join("alignments.jsonl"),
            expected: dir.join("expected.json"),
        };
        ingest::write_dataset(&files.dataset, &self.dataset)?;
        DatasetManifest::new(
            self.expected.meta.name.clone(),
            self.dataset.len(),
            "synthetic coverage design",
        )
        .write(&DatasetManifest::path_for(&files.dataset))?;
        ingest::write_alignments(&files.alignments, &self.alignments)?;
        ingest::write_json(
            &AlignmentMeta::path_for(&files.alignments),
            &AlignmentMeta {
                scorer_id: SYNTHETIC_SCORER.into(),
                extractor_id: None,
                tau: crate::align::DEFAULT_THRESHOLD,
            },
        )?;
        ingest::write_json(&files.expected, &self.expected)?;
        Ok(files)
    }
}

fn cover_sets(config: &SynthConfig, n_docs: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let m = config.n_props;
    let mut sets = vec![Vec::new(); n_docs];
    match &config.design {
        CoverageDesign::SingleDoc => sets[0] = (0..m).collect(),
        CoverageDesign::DisjointUniform => {
            for j in 0..m {
                sets[j % n_docs].push(j);
            }
        }
        CoverageDesign::Geometric(p) => {
            let weights: Vec<f64> = (0..n_docs).map(|d| p * (1.0 - p).powi(d as i32)).collect();
            let pick = WeightedIndex::new(&weights).expect("positive weights");
            for j in 0..m {
                sets[pick.sample(rng)].push(j);
            }
        }
        CoverageDesign::Random(density) => {
            for set in &mut sets {
                for j in 0..m {
                    if rng.random_bool(*density) {
                        set.push(j);
                    }
                }
            }
        }
        CoverageDesign::Custom(rows) => {
            for (set, row) in sets.iter_mut().zip(rows) {
                set.extend(row.iter().enumerate().filter(|(_, &c)| c).map(|(j, _)| j));
            }
        }
    }
    sets
}

/// Expected `cov_k` for one topic, or `None` when nothing is covered.
fn expected_curve(design: &CoverageDesign, sets: &[Vec<usize>], m: usize) -> Option<Vec<f64>> {
    let n = sets.len();
    match design {
        CoverageDesign::SingleDoc => Some(vec![1.0; n]),
        CoverageDesign::DisjointUniform => {
            let (q, r) = (m / n, m % n);
            Some(
                (1..=n)
                    .map(|k| (k * q + k.min(r)) as f64 / m as f64)
                    .collect(),
            )
        }
        CoverageDesign::Geometric(_) => {
            // disjoint blocks: greedy takes them largest first
            let mut sizes: Vec<usize> = sets.iter().map(Vec::len).collect();
            sizes.sort_unstable_by(|a, b| b.cmp(a));
            let mut total = 0;
            Some(
                sizes
                    .iter()
                    .map(|s| {
                        total += s;
                        total as f64 / m as f64
                    })
                    .collect(),
            )
        }
        CoverageDesign::Random(_) | CoverageDesign::Custom(_) => straight_greedy(sets, m),
    }
}

/// Greedy maximum coverage over boolean marks, recounting every candidate each step.
fn straight_greedy(sets: &[Vec<usize>], m: usize) -> Option<Vec<f64>> {
    let mut reachable = vec![false; m];
    sets.iter().flatten().for_each(|&j| reachable[j] = true);
    let denominator = reachable.iter().filter(|&&r| r).count();
    if denominator == 0 {
        return None;
    }
    let mut marked = vec![false; m];
    let mut used = vec![false; sets.len()];
    let mut curve = Vec::with_capacity(sets.len());
    let mut count = 0;
    for _ in 0..sets.len() {
        let mut best = None;
        let mut best_gain = 0;
        for (d, set) in sets.iter().enumerate() {
            if used[d] {
                continue;
            }
            let gain = set.iter().filter(|&&j| !marked[j]).count();
            if best.is_none() || gain > best_gain {
                best = Some(d);
                best_gain = gain;
            }
        }
        let d = best.expect("unused document");
        used[d] = true;
        for &j in &sets[d] {
            marked[j] = true;
        }
        count += best_gain;
        curve.push(count as f64 / denominator as f64);
    }
    Some(curve)
}

fn prop_text(topic: usize, prop: usize) -> String {
    format!("t{topic}s{prop}a t{topic}s{prop}b t{topic}s{prop}c")
}

/// Generate a dataset, its designed alignments, and the expected report.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dataset = Vec::with_capacity(config.topics);
    let mut alignments = Vec::with_capacity(config.topics);
    let mut designs = Vec::with_capacity(config.topics);
    let mut curves: Vec<Vec<f64>> = Vec::new();
    let mut skipped = 0;

    for t in 0..config.topics {
        let n_docs = if config.vary_docs {
            rng.random_range(1..=config.n_docs)
        } else {
            config.n_docs
        };
        let sets = cover_sets(config, n_docs, &mut rng);
        let topic_id = format!("t{t}");
        let summary = Summary::reference(
            "ref",
            (0..config.n_props)
                .map(|j| Proposition::new(format!("p{j}"), prop_text(t, j)))
                .collect(),
        );
        let mut edges = Vec::new();
        let documents = sets
            .iter()
            .enumerate()
            .map(|(d, set)| {
                let doc_id = format!("d{d}");
                let mut props: Vec<Proposition> = set
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| {
                        edges.push(AlignmentEdge {
                            summary_prop: format!("p{j}"),
                            doc_id: doc_id.clone(),
                            doc_prop: format!("q{i}"),
                            score: 1.0,
                        });
                        Proposition::new(format!("q{i}"), prop_text(t, j))
                    })
                    .collect();
                props.push(Proposition::new(
                    format!("q{}", set.len()),
                    format!("t{t}d{d}fa t{t}d{d}fb t{t}d{d}fc"),
                ));
                Document::from_propositions(doc_id, props)
            })
            .collect();
        dataset.push(Topic::new(topic_id.clone(), documents, vec![summary])?);
        alignments.push(AlignmentRelation {
            topic_id,
            summary_id: "ref".into(),
            edges,
            threshold: crate::align::DEFAULT_THRESHOLD,
            scorer_id: SYNTHETIC_SCORER.into(),
        });
        match expected_curve(&config.design, &sets, config.n_props) {
            Some(curve) => curves.push(curve),
            None => skipped += 1,
        }
        designs.push(sets);
    }

    let expected = expected_report(config, &curves, skipped)?;
    Ok(SynthOutput {
        dataset,
        alignments,
        expected,
        designs,
    })
}

fn expected_report(
    config: &SynthConfig,
    curves: &[Vec<f64>],
    skipped: usize,
) -> Result<DatasetReport> {
    if curves.is_empty() {
        return Err(Error::AllSkipped);
    }
    let scale = 100.0 / config.n_max as f64;
    let width = curves.iter().map(Vec::len).max().unwrap_or(0);
    let per_topic: Vec<f64> = curves
        .iter()
        .map(|c| scale * c.iter().map(|v| 1.0 - v).sum::<f64>())
        .collect();
    let topics = curves.len() as f64;
    let aggregate: Vec<f64> = (0..width)
        .map(|k| {
            curves
                .iter()
                .map(|c| c.get(k).copied().unwrap_or(1.0))
                .sum::<f64>()
                / topics
        })
        .collect();
    let mean = per_topic.iter().sum::<f64>() / topics;
    let std = (per_topic
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / topics)
        .sqrt();
    Ok(DatasetReport {
        meta: ReportMeta {
            name: format!("synthetic-{}", config.design.name()),
            tau: Some(crate::align::DEFAULT_THRESHOLD),
            scorer_id: Some(SYNTHETIC_SCORER.into()),
            ..ReportMeta::default()
        },
        aac_scale: "percent".into(),
        n_max: config.n_max,
        dataset_aac: scale * aggregate.iter().map(|v| 1.0 - v).sum::<f64>(),
        aggregate_cov: aggregate,
        per_topic_aac: per_topic,
        aac_mean: mean,
        aac_std: std,
        topics_evaluated: curves.len(),
        topics_skipped: skipped,
    })
}

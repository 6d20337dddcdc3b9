//! Reading and writing datasets, alignments and reports.
//!
//! Datasets and alignments are line-delimited JSON, one topic (or one scored
//! edge) per line. Inputs are validated and rejected when invalid, never
//! repaired. Reports are a JSON record plus two CSV tables with six decimals.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AlignmentEdge, AlignmentRelation, DatasetReport, Proposition, Summary, SummaryKind, Topic,
    TopicResult,
};

pub const FORMAT_VERSION: &str = "1";

/// Scorer id given to relations read from an alignment file.
pub const PRECOMPUTED_SCORER: &str = "precomputed";

/// Describes a dataset file written by this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub name: String,
    pub topics: usize,
    #[serde(default)]
    pub provenance: String,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, topics: usize, provenance: impl Into<String>) -> Self {
        DatasetManifest {
            format_version: FORMAT_VERSION.into(),
            name: name.into(),
            topics,
            provenance: provenance.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported format_version {:?}, expected {FORMAT_VERSION:?}",
                self.format_version
            )));
        }
        Ok(())
    }

    /// Sidecar location for a dataset file: `<dataset>.manifest.json`.
    pub fn path_for(dataset: &Path) -> PathBuf {
        sidecar(dataset, "manifest.json")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest: DatasetManifest = read_json(path)?;
        manifest.validate()?;
        Ok(manifest)
    }
}

/// `<path>.<suffix>`, keeping the full original file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(n, line)| line.map(|l| (n + 1, l)).map_err(|e| Error::io(path, e)))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty())))
}

/// serde_json messages without backticks or the trailing "at line L column C".
fn record_error(line: usize, err: serde_json::Error) -> Error {
    let mut message = err.to_string().replace('`', "");
    if let Some(at) = message.find(" at line ") {
        message.truncate(at);
    }
    Error::Record { line, message }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn write_lines<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = create(path)?;
    for record in records {
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Load validated topics in file order, stopping after `limit` topics if given.
pub fn load_dataset(path: &Path, limit: Option<usize>) -> Result<Vec<Topic>> {
    let mut topics = Vec::new();
    let mut seen = HashSet::new();
    for entry in open_lines(path)? {
        if limit.is_some_and(|l| topics.len() >= l) {
            break;
        }
        let (line, text) = entry?;
        let mut topic: Topic = serde_json::from_str(&text).map_err(|e| record_error(line, e))?;
        topic.bind();
        topic.validate().map_err(|e| Error::Record {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(topic.topic_id.clone()) {
            return Err(Error::Record {
                line,
                message: format!("duplicate topic_id {}", topic.topic_id),
            });
        }
        topics.push(topic);
    }
    Ok(topics)
}

pub fn write_dataset(path: &Path, topics: &[Topic]) -> Result<()> {
    write_lines(path, topics)
}

#[derive(Debug, Serialize, Deserialize)]
struct AlignmentLine {
    topic_id: String,
    summary_id: String,
    summary_prop: String,
    doc_id: String,
    doc_prop: String,
    score: f64,
}

/// Load scored edges grouped into one relation per (topic, summary), in first-seen order.
///
/// Relations get the default threshold; proposition ids are checked later, when
/// a relation is bound to its topic.
pub fn load_alignments(path: &Path) -> Result<Vec<AlignmentRelation>> {
    let mut relations: Vec<AlignmentRelation> = Vec::new();
    let mut slots: HashMap<(String, String), usize> = HashMap::new();
    for entry in open_lines(path)? {
        let (line, text) = entry?;
        let record: AlignmentLine =
            serde_json::from_str(&text).map_err(|e| record_error(line, e))?;
        if !(0.0..=1.0).contains(&record.score) {
            return Err(Error::ScoreRange {
                what: format!(
                    "line {line} edge {}/{}: {} -> {}/{}",
                    record.topic_id,
                    record.summary_id,
                    record.summary_prop,
                    record.doc_id,
                    record.doc_prop
                ),
                score: record.score,
            });
        }
        let key = (record.topic_id.clone(), record.summary_id.clone());
        let slot = *slots.entry(key).or_insert_with(|| {
            relations.push(AlignmentRelation {
                topic_id: record.topic_id.clone(),
                summary_id: record.summary_id.clone(),
                edges: Vec::new(),
                threshold: crate::align::DEFAULT_THRESHOLD,
                scorer_id: PRECOMPUTED_SCORER.into(),
            });
            relations.len() - 1
        });
        relations[slot].edges.push(AlignmentEdge {
            summary_prop: record.summary_prop,
            doc_id: record.doc_id,
            doc_prop: record.doc_prop,
            score: record.score,
        });
    }
    Ok(relations)
}

pub fn write_alignments(path: &Path, relations: &[AlignmentRelation]) -> Result<()> {
    write_lines(
        path,
        relations.iter().flat_map(|r| {
            r.edges.iter().map(move |e| AlignmentLine {
                topic_id: r.topic_id.clone(),
                summary_id: r.summary_id.clone(),
                summary_prop: e.summary_prop.clone(),
                doc_id: e.doc_id.clone(),
                doc_prop: e.doc_prop.clone(),
                score: e.score,
            })
        }),
    )
}

/// How an alignment file was produced; stored next to it as `<file>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMeta {
    pub scorer_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor_id: Option<String>,
    pub tau: f64,
}

impl AlignmentMeta {
    pub fn path_for(alignments: &Path) -> PathBuf {
        sidecar(alignments, "meta.json")
    }

    pub fn load_if_present(alignments: &Path) -> Result<Option<Self>> {
        let path = Self::path_for(alignments);
        if path.exists() {
            read_json(&path).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Relations keyed by (topic, summary); every relation must name a loaded topic.
pub fn index_relations<'a>(
    topics: &[Topic],
    relations: &'a [AlignmentRelation],
) -> Result<HashMap<(&'a str, &'a str), &'a AlignmentRelation>> {
    let known: HashSet<&str> = topics.iter().map(|t| t.topic_id.as_str()).collect();
    let mut index = HashMap::new();
    for r in relations {
        if !known.contains(r.topic_id.as_str()) {
            return Err(Error::UnknownReference(format!(
                "alignments reference unknown topic {}",
                r.topic_id
            )));
        }
        if index
            .insert((r.topic_id.as_str(), r.summary_id.as_str()), r)
            .is_some()
        {
            return Err(Error::Invalid(format!(
                "two relations for {}/{}",
                r.topic_id, r.summary_id
            )));
        }
    }
    Ok(index)
}

#[derive(Debug, Deserialize)]
struct SystemSummaryRecord {
    topic_id: String,
    system_name: String,
    #[serde(default)]
    summary_id: Option<String>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    propositions: Option<Vec<Proposition>>,
}

/// Attach system outputs to their topics.
///
/// One record per line: `topic_id`, `system_name`, optional `summary_id`
/// (defaults to the system name), and `text` and/or `propositions`.
pub fn load_system_summaries(path: &Path, mut dataset: Vec<Topic>) -> Result<Vec<Topic>> {
    let slots: HashMap<String, usize> = dataset
        .iter()
        .enumerate()
        .map(|(i, t)| (t.topic_id.clone(), i))
        .collect();
    let mut unmatched: Vec<String> = Vec::new();
    for entry in open_lines(path)? {
        let (line, text) = entry?;
        let record: SystemSummaryRecord =
            serde_json::from_str(&text).map_err(|e| record_error(line, e))?;
        let Some(&slot) = slots.get(&record.topic_id) else {
            if !unmatched.contains(&record.topic_id) {
                unmatched.push(record.topic_id);
            }
            continue;
        };
        let topic = &mut dataset[slot];
        let summary_id = record
            .summary_id
            .unwrap_or_else(|| record.system_name.clone());
        if topic.summary(&summary_id).is_some() {
            return Err(Error::Record {
                line,
                message: format!(
                    "duplicate summary_id {summary_id} in topic {}",
                    topic.topic_id
                ),
            });
        }
        topic.summaries.push(Summary {
            summary_id,
            kind: SummaryKind::System,
            system_name: Some(record.system_name),
            text: record.text,
            propositions: record.propositions,
        });
        topic.bind();
        topic.validate().map_err(|e| Error::Record {
            line,
            message: e.to_string(),
        })?;
    }
    if !unmatched.is_empty() {
        return Err(Error::UnknownReference(format!(
            "system summaries for unknown topics: {}",
            unmatched.join(", ")
        )));
    }
    Ok(dataset)
}

/// Files produced by [`write_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub per_topic: PathBuf,
    pub curve: PathBuf,
}

/// Write `report.json`, `per_topic.csv` and `curve.csv` into `out_dir`, replacing old copies.
pub fn write_report(
    report: &DatasetReport,
    results: &[TopicResult],
    out_dir: &Path,
) -> Result<ReportFiles> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = ReportFiles {
        report: out_dir.join("report.json"),
        per_topic: out_dir.join("per_topic.csv"),
        curve: out_dir.join("curve.csv"),
    };
    write_json(&files.report, report)?;

    let mut per_topic = csv::Writer::from_writer(create(&files.per_topic)?);
    per_topic.write_record([
        "topic_id",
        "summary_id",
        "n_docs",
        "denominator",
        "aac",
        "skipped",
    ])?;
    for r in results {
        let aac = if r.is_skipped() {
            String::new()
        } else {
            format!("{:.6}", r.aac)
        };
        per_topic.write_record([
            r.topic_id.as_str(),
            r.summary_id.as_str(),
            &r.n_docs.to_string(),
            &r.curve.denominator.to_string(),
            &aac,
            if r.is_skipped() { "true" } else { "false" },
        ])?;
    }
    per_topic
        .flush()
        .map_err(|e| Error::io(&files.per_topic, e))?;

    write_curve_csv(&files.curve, &report.aggregate_cov)?;
    Ok(files)
}

/// `k,cov_k` rows with six decimals.
pub fn write_curve_csv(path: &Path, cov: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(path)?);
    out.write_record(["k", "cov_k"])?;
    for (k, c) in cov.iter().enumerate() {
        out.write_record([(k + 1).to_string(), format!("{c:.6}")])?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read a `report.json`, given either the file or the directory holding it.
pub fn load_report(path: &Path) -> Result<DatasetReport> {
    if path.is_dir() {
        read_json(&path.join("report.json"))
    } else {
        read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoverageCurve, Document, ReportMeta};

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    fn topic_line(id: &str) -> String {
        format!(
            r#"{{"topic_id":"{id}","documents":[{{"doc_id":"d0","propositions":[{{"id":"q0","text":"ice melts"}}]}},{{"doc_id":"d1","text":"Seas rise."}}],"summaries":[{{"summary_id":"ref","kind":"reference","propositions":[{{"id":"p0","text":"ice melts","span":[0,9]}}]}}]}}"#
        )
    }

    #[test]
    fn loads_topics_in_order_with_limit() {
        let dir = tempfile::tempdir().unwrap();
        let body = ["a", "b", "c"].map(topic_line).join("\n");
        let path = write(dir.path(), "data.jsonl", &body);
        let topics = load_dataset(&path, None).unwrap();
        assert_eq!(
            topics
                .iter()
                .map(|t| t.topic_id.as_str())
                .collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        assert_eq!(topics[0].documents[1].index, 1);
        assert_eq!(
            topics[0].summaries[0].propositions()[0].char_span,
            Some((0, 9))
        );
        assert!(topics[0].documents[1].propositions.is_none());
        assert_eq!(load_dataset(&path, Some(1)).unwrap().len(), 1);
    }

    #[test]
    fn missing_field_names_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{}\n{}\n",
            topic_line("a"),
            r#"{"topic_id":"b","summaries":[]}"#
        );
        let path = write(dir.path(), "data.jsonl", &body);
        let err = load_dataset(&path, None).unwrap_err();
        assert_eq!(err.to_string(), "line 2: missing field documents");
    }

    #[test]
    fn duplicate_topics_and_invalid_topics_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "dup.jsonl",
            &[topic_line("a"), topic_line("a")].join("\n"),
        );
        let err = load_dataset(&path, None).unwrap_err();
        assert_eq!(err.to_string(), "line 2: duplicate topic_id a");

        let path = write(
            dir.path(),
            "empty.jsonl",
            r#"{"topic_id":"x","documents":[],"summaries":[]}"#,
        );
        assert!(matches!(
            load_dataset(&path, None),
            Err(Error::Record { line: 1, .. })
        ));
        assert!(matches!(
            load_dataset(&dir.path().join("absent.jsonl"), None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn alignments_group_by_summary_and_reject_bad_scores() {
        let dir = tempfile::tempdir().unwrap();
        let edge = |s: &str, score: &str| {
            format!(
                r#"{{"topic_id":"t","summary_id":"{s}","summary_prop":"p1","doc_id":"d0","doc_prop":"q3","score":{score}}}"#
            )
        };
        let path = write(dir.path(), "one.jsonl", &edge("s", "0.9"));
        let relations = load_alignments(&path).unwrap();
        assert_eq!(relations.len(), 1);
        assert_eq!(relations[0].edges.len(), 1);
        assert_eq!(relations[0].edges[0].score, 0.9);

        let path = write(
            dir.path(),
            "two.jsonl",
            &[edge("s", "0.9"), edge("r", "0.1"), edge("s", "0.2")].join("\n"),
        );
        let relations = load_alignments(&path).unwrap();
        assert_eq!(relations.len(), 2);
        assert_eq!(
            (relations[0].summary_id.as_str(), relations[0].edges.len()),
            ("s", 2)
        );

        for bad in ["1.2", "-0.1"] {
            let path = write(dir.path(), "bad.jsonl", &edge("s", bad));
            let err = load_alignments(&path).unwrap_err();
            assert!(matches!(err, Error::ScoreRange { .. }));
            assert!(err.to_string().contains("p1 -> d0/q3"), "{err}");
        }
    }

    #[test]
    fn system_summaries_attach_to_known_topics() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(
            dir.path(),
            "data.jsonl",
            &[topic_line("a"), topic_line("b")].join("\n"),
        );
        let sys = write(
            dir.path(),
            "sys.jsonl",
            concat!(
                r#"{"topic_id":"a","system_name":"lexrank","text":"Ice melts quickly now."}"#,
                "\n",
                r#"{"topic_id":"b","system_name":"lexrank","propositions":[{"id":"p0","text":"ice"}]}"#
            ),
        );
        let topics = load_system_summaries(&sys, load_dataset(&data, None).unwrap()).unwrap();
        for t in &topics {
            let s = t.summary("lexrank").unwrap();
            assert_eq!(s.kind, SummaryKind::System);
            assert_eq!(s.system_name.as_deref(), Some("lexrank"));
        }

        let unknown = write(
            dir.path(),
            "unknown.jsonl",
            concat!(
                r#"{"topic_id":"t99","system_name":"pg","text":"x"}"#,
                "\n",
                r#"{"topic_id":"t98","system_name":"pg","text":"x"}"#
            ),
        );
        let err = load_system_summaries(&unknown, load_dataset(&data, None).unwrap()).unwrap_err();
        assert!(err.to_string().contains("t99, t98"), "{err}");

        let twice = write(
            dir.path(),
            "twice.jsonl",
            concat!(
                r#"{"topic_id":"a","system_name":"pg","text":"x"}"#,
                "\n",
                r#"{"topic_id":"a","system_name":"pg","text":"y"}"#
            ),
        );
        let err = load_system_summaries(&twice, load_dataset(&data, None).unwrap()).unwrap_err();
        assert!(err.to_string().contains("duplicate summary_id"), "{err}");
    }

    fn report(cov: Vec<f64>) -> DatasetReport {
        DatasetReport {
            meta: ReportMeta::default(),
            aac_scale: "percent".into(),
            n_max: 10,
            aggregate_cov: cov,
            dataset_aac: 3.0,
            per_topic_aac: vec![3.0],
            aac_mean: 3.0,
            aac_std: 0.0,
            topics_evaluated: 1,
            topics_skipped: 1,
        }
    }

    fn result(topic: &str, skipped: bool) -> TopicResult {
        TopicResult {
            topic_id: topic.into(),
            summary_id: "ref".into(),
            n_docs: 2,
            curve: CoverageCurve {
                topic_id: topic.into(),
                summary_id: "ref".into(),
                greedy_order: vec![0, 1],
                cov: vec![0.7, 1.0],
                denominator: if skipped { 0 } else { 10 },
            },
            aac: 3.0,
            skipped: skipped.then(|| "degenerate".to_string()),
        }
    }

    #[test]
    fn report_files_follow_the_table_formats() {
        let dir = tempfile::tempdir().unwrap();
        let results = [result("a", false), result("b", true)];
        let files = write_report(&report(vec![0.7, 1.0]), &results, dir.path()).unwrap();
        assert_eq!(
            fs::read_to_string(&files.curve).unwrap(),
            "k,cov_k\n1,0.700000\n2,1.000000\n"
        );
        assert_eq!(
            fs::read_to_string(&files.per_topic).unwrap(),
            "topic_id,summary_id,n_docs,denominator,aac,skipped\na,ref,2,10,3.000000,false\nb,ref,2,0,,true\n"
        );
        assert_eq!(load_report(dir.path()).unwrap(), report(vec![0.7, 1.0]));

        // overwrite with nothing in it
        write_report(&report(vec![]), &[], dir.path()).unwrap();
        assert_eq!(fs::read_to_string(&files.curve).unwrap(), "k,cov_k\n");
        assert_eq!(
            fs::read_to_string(&files.per_topic).unwrap(),
            "topic_id,summary_id,n_docs,denominator,aac,skipped\n"
        );
    }

    #[test]
    fn unwritable_output_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = write(dir.path(), "file", "x");
        let err = write_report(&report(vec![1.0]), &[], &blocker.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn manifest_version_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        DatasetManifest::new("x", 3, "test").write(&path).unwrap();
        assert_eq!(DatasetManifest::load(&path).unwrap().topics, 3);
        let mut bad = DatasetManifest::new("x", 3, "test");
        bad.format_version = "0.9".into();
        bad.write(&path).unwrap();
        assert!(DatasetManifest::load(&path).is_err());
        assert_eq!(
            DatasetManifest::path_for(Path::new("/a/data.jsonl")),
            PathBuf::from("/a/data.jsonl.manifest.json")
        );
    }

    #[test]
    fn relation_index_requires_known_topics() {
        let topic = Topic::new(
            "t",
            vec![Document::from_text("d0", "x")],
            vec![Summary::reference("s", vec![])],
        )
        .unwrap();
        let rel = |topic: &str| AlignmentRelation {
            topic_id: topic.into(),
            summary_id: "s".into(),
            edges: vec![],
            threshold: 0.5,
            scorer_id: "x".into(),
        };
        let ok = [rel("t")];
        assert_eq!(
            index_relations(std::slice::from_ref(&topic), &ok)
                .unwrap()
                .len(),
            1
        );
        let bad = [rel("u")];
        assert!(index_relations(&[topic], &bad).is_err());
    }
}

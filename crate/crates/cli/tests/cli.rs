use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dispersion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dispersion"))
        .args(args)
        .env_remove("DISP_ENDPOINT")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dispersion(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Synthesize, align lexically; returns (dataset, alignments).
fn prepared(dir: &Path, synth_args: &[&str]) -> (PathBuf, PathBuf) {
    let sdir = dir.join("synth");
    let mut args = vec!["synth", "--out", s(&sdir)];
    args.extend_from_slice(synth_args);
    ok(&args);
    let dataset = sdir.join("dataset.jsonl");
    let alignments = dir.join("alignments.jsonl");
    ok(&["align", s(&dataset), "--out", s(&alignments)]);
    (dataset, alignments)
}

fn cov_of(report: &Value) -> Vec<f64> {
    report["aggregate_cov"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect()
}

#[test]
fn align_writes_every_pair_and_reports_counts() {
    let dir = TempDir::new().unwrap();
    let (_, alignments) = prepared(
        dir.path(),
        &[
            "--design", "disjoint", "--topics", "3", "--n", "4", "--m", "4",
        ],
    );
    let records = lines(&alignments);
    // 4 summary props x 4 docs x 2 doc props (copy + filler) per topic
    assert_eq!(records.len(), 3 * 4 * 4 * 2);
    assert_eq!(
        records
            .iter()
            .filter(|r| r["score"].as_f64() == Some(1.0))
            .count(),
        12
    );
    let meta = json(&dir.path().join("alignments.jsonl.meta.json"));
    assert_eq!(meta["scorer_id"], "lexical-f1");
}

#[test]
fn align_usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out_path = dir.path().join("a.jsonl");
    let out = dispersion(&["align", s(&missing), "--out", s(&out_path)]);
    assert_eq!(code(&out), 2);

    let (dataset, _) = prepared(dir.path(), &["--design", "single_doc"]);
    let out = dispersion(&[
        "align",
        s(&dataset),
        "--scorer",
        "remote",
        "--out",
        s(&out_path),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("endpoint"));

    let out = dispersion(&[
        "align",
        s(&dataset),
        "--scorer",
        "magic",
        "--out",
        s(&out_path),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn endpoint_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let (dataset, _) = prepared(dir.path(), &["--design", "single_doc"]);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let out_path = dir.path().join("a.jsonl");
    let out = Command::new(env!("CARGO_BIN_EXE_dispersion"))
        .args([
            "align",
            s(&dataset),
            "--scorer",
            "remote",
            "--out",
            s(&out_path),
        ])
        .env("DISP_ENDPOINT", &url)
        .output()
        .unwrap();
    // the endpoint was taken up, and nothing listens there
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains(&url));
}

#[test]
fn precomputed_alignments_are_validated() {
    let dir = TempDir::new().unwrap();
    let (dataset, alignments) = prepared(dir.path(), &["--design", "disjoint"]);
    let copy = dir.path().join("copy.jsonl");
    ok(&[
        "align",
        s(&dataset),
        "--scorer",
        "precomputed",
        "--alignments",
        s(&alignments),
        "--out",
        s(&copy),
    ]);
    assert_eq!(fs::read(&copy).unwrap(), fs::read(&alignments).unwrap());

    let bad = dir.path().join("bad.jsonl");
    let text = fs::read_to_string(&alignments)
        .unwrap()
        .replacen("\"q0\"", "\"q99\"", 1);
    fs::write(&bad, text).unwrap();
    let out = dispersion(&[
        "align",
        s(&dataset),
        "--scorer",
        "precomputed",
        "--alignments",
        s(&bad),
        "--out",
        s(&copy),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn score_single_doc_and_disjoint() {
    let dir = TempDir::new().unwrap();
    let (dataset, alignments) = prepared(&dir.path().join("a"), &["--design", "single_doc"]);
    let reports = dir.path().join("single");
    ok(&["score", s(&dataset), s(&alignments), "--out", s(&reports)]);
    let report = json(&reports.join("report.json"));
    assert_eq!(report["dataset_aac"].as_f64(), Some(0.0));

    let (dataset, alignments) = prepared(
        &dir.path().join("b"),
        &["--design", "disjoint", "--n", "4", "--m", "4"],
    );
    let reports = dir.path().join("disjoint");
    ok(&["score", s(&dataset), s(&alignments), "--out", s(&reports)]);
    let report = json(&reports.join("report.json"));
    assert!((report["dataset_aac"].as_f64().unwrap() - 15.0).abs() < 1e-9);
    assert_eq!(cov_of(&report), vec![0.25, 0.5, 0.75, 1.0]);
    let per_topic = fs::read_to_string(reports.join("per_topic.csv")).unwrap();
    assert_eq!(per_topic.lines().count(), 4);
}

#[test]
fn all_skipped_exits_1() {
    let dir = TempDir::new().unwrap();
    let (dataset, _) = prepared(dir.path(), &["--design", "disjoint"]);
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = dispersion(&[
        "score",
        s(&dataset),
        s(&empty),
        "--out",
        s(&dir.path().join("r")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("zero aligned"));
}

#[test]
fn two_systems_give_two_reports() {
    let dir = TempDir::new().unwrap();
    let (dataset, _) = prepared(
        dir.path(),
        &[
            "--design", "disjoint", "--topics", "2", "--n", "4", "--m", "4",
        ],
    );
    // Summary proposition j of topic t is "t{t}s{j}a t{t}s{j}b t{t}s{j}c", held by document j.
    let prop = |t: usize, j: usize| format!("t{t}s{j}a t{t}s{j}b t{t}s{j}c");
    let mut systems = String::new();
    for t in 0..2 {
        for (name, props) in [("alpha", vec![0, 1]), ("beta", vec![2])] {
            let props: Vec<Value> = props
                .iter()
                .map(|&j| serde_json::json!({"id": format!("p{j}"), "text": prop(t, j)}))
                .collect();
            systems.push_str(
                &serde_json::json!({"topic_id": format!("t{t}"), "system_name": name, "propositions": props})
                    .to_string(),
            );
            systems.push('\n');
        }
    }
    let systems_path = dir.path().join("systems.jsonl");
    fs::write(&systems_path, systems).unwrap();
    let alignments = dir.path().join("sys_alignments.jsonl");
    ok(&[
        "align",
        s(&dataset),
        "--systems",
        s(&systems_path),
        "--out",
        s(&alignments),
    ]);
    let reports = dir.path().join("reports");
    ok(&[
        "score",
        s(&dataset),
        s(&alignments),
        "--systems",
        s(&systems_path),
        "--summary-kind",
        "system",
        "--out",
        s(&reports),
    ]);
    let alpha = json(&reports.join("alpha/report.json"));
    let beta = json(&reports.join("beta/report.json"));
    assert_eq!(cov_of(&alpha), vec![0.5, 1.0, 1.0, 1.0]);
    assert_eq!(cov_of(&beta), vec![1.0, 1.0, 1.0, 1.0]);
    assert_eq!(alpha["meta"]["system_name"], "alpha");
    assert!((alpha["dataset_aac"].as_f64().unwrap() - 5.0).abs() < 1e-9);
}

#[test]
fn curve_csv_and_svg() {
    let dir = TempDir::new().unwrap();
    let (dataset, alignments) = prepared(
        dir.path(),
        &["--design", "disjoint", "--n", "2", "--m", "2"],
    );
    let r1 = dir.path().join("r1");
    ok(&["score", s(&dataset), s(&alignments), "--out", s(&r1)]);
    let (dataset2, alignments2) = prepared(
        &dir.path().join("second"),
        &["--design", "disjoint", "--n", "4", "--m", "4"],
    );
    let r2 = dir.path().join("r2");
    ok(&[
        "score",
        s(&dataset2),
        s(&alignments2),
        "--out",
        s(&r2),
        "--name",
        "wide",
    ]);

    let one = dir.path().join("one");
    ok(&["curve", s(&r1), "--out", s(&one)]);
    let csv = fs::read_to_string(one.join("curve.csv")).unwrap();
    assert_eq!(csv, "k,cov_k\n1,0.500000\n2,1.000000\n");

    let both = dir.path().join("both");
    ok(&[
        "curve",
        s(&r1.join("report.json")),
        s(&r2),
        "--svg",
        "--out",
        s(&both),
    ]);
    let mut csvs: Vec<String> = fs::read_dir(&both)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    csvs.sort();
    assert_eq!(
        csvs,
        [
            "curve_0_synthetic-disjoint_uniform_reference.csv",
            "curve_1_wide_reference.csv"
        ]
    );
    let svg = fs::read_to_string(both.join("curve.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(
        doc.descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .count(),
        2
    );
    assert!(doc
        .descendants()
        .any(|n| n.text() == Some("wide/reference")));
}

#[test]
fn curve_rejects_empty_report() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.json");
    fs::write(
        &report,
        r#"{"meta":{"name":"x"},"aac_scale":"percent","n_max":10,"aggregate_cov":[],"dataset_aac":0.0,
            "per_topic_aac":[],"aac_mean":0.0,"aac_std":0.0,"topics_evaluated":0,"topics_skipped":0}"#,
    )
    .unwrap();
    let out = dispersion(&["curve", s(&report), "--out", s(&dir.path().join("c"))]);
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty curve"));
}

/// Greedy order from the alignment file alone: largest gain, lowest index on ties.
fn oracle_greedy(records: &[Value], topic: &str, n_docs: usize) -> Vec<String> {
    let mut covers: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r["topic_id"] == topic && r["score"].as_f64().unwrap() >= 0.5)
    {
        let d: usize = r["doc_id"].as_str().unwrap()[1..].parse().unwrap();
        covers
            .entry(d)
            .or_default()
            .insert(r["summary_prop"].as_str().unwrap().to_string());
    }
    let mut covered = BTreeSet::new();
    let mut left: Vec<usize> = (0..n_docs).collect();
    let mut order = Vec::new();
    while !left.is_empty() {
        let gain = |d: &usize| covers.get(d).map_or(0, |c| c.difference(&covered).count());
        let best = *left.iter().rev().max_by_key(|d| gain(d)).unwrap();
        covered.extend(covers.get(&best).cloned().unwrap_or_default());
        left.retain(|&d| d != best);
        order.push(format!("d{best}"));
    }
    order
}

#[test]
fn subset_k1_and_k2() {
    let dir = TempDir::new().unwrap();
    let (dataset, alignments) = prepared(
        dir.path(),
        &[
            "--design",
            "random",
            "--density",
            "0.4",
            "--topics",
            "3",
            "--n",
            "5",
            "--m",
            "6",
            "--seed",
            "11",
        ],
    );
    let k1 = dir.path().join("k1.jsonl");
    ok(&[
        "subset",
        s(&dataset),
        s(&alignments),
        "--k",
        "1",
        "--out",
        s(&k1),
    ]);
    let reduced = lines(&k1);
    assert_eq!(reduced.len(), 3);
    assert!(reduced
        .iter()
        .all(|t| t["documents"].as_array().unwrap().len() == 1));

    let k2 = dir.path().join("k2.jsonl");
    ok(&[
        "subset",
        s(&dataset),
        s(&alignments),
        "--k",
        "2",
        "--out",
        s(&k2),
    ]);
    let traces = lines(&dir.path().join("k2.jsonl.traces.jsonl"));
    let records = lines(&alignments);
    for trace in &traces {
        let ids: Vec<String> = trace["doc_ids"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect();
        let topic = trace["topic_id"].as_str().unwrap();
        let expected = oracle_greedy(&records, topic, 5);
        if trace["fallback"] == false {
            assert_eq!(ids, expected[..2], "topic {topic}");
        }
    }

    // mean trace coverage equals cov_2 from the score output when no topic is degenerate
    let reports = dir.path().join("r");
    ok(&["score", s(&dataset), s(&alignments), "--out", s(&reports)]);
    let report = json(&reports.join("report.json"));
    if report["topics_skipped"] == 0 {
        let mean = traces
            .iter()
            .map(|t| t["coverage"].as_f64().unwrap())
            .sum::<f64>()
            / traces.len() as f64;
        assert!((mean - cov_of(&report)[1]).abs() < 1e-9);
    }
}

#[test]
fn subset_without_alignments_exits_2() {
    let dir = TempDir::new().unwrap();
    let (dataset, _) = prepared(dir.path(), &["--design", "disjoint"]);
    let out_path = dir.path().join("k.jsonl");
    let out = dispersion(&[
        "subset",
        s(&dataset),
        s(&dir.path().join("none.jsonl")),
        "--k",
        "1",
        "--out",
        s(&out_path),
    ]);
    assert_eq!(code(&out), 2);
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = dispersion(&[
        "subset",
        s(&dataset),
        s(&empty),
        "--k",
        "1",
        "--out",
        s(&out_path),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no alignments for topics: t0, t1, t2"));
}

#[test]
fn synth_is_seed_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&[
            "synth",
            "--design",
            "geometric",
            "--p",
            "0.5",
            "--n",
            "5",
            "--m",
            "9",
            "--seed",
            "42",
            "--out",
            s(out),
        ]);
    }
    for file in [
        "dataset.jsonl",
        "alignments.jsonl",
        "expected.json",
        "dataset.jsonl.manifest.json",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let c = dir.path().join("c");
    ok(&[
        "synth",
        "--design",
        "geometric",
        "--p",
        "0.5",
        "--n",
        "5",
        "--m",
        "9",
        "--seed",
        "43",
        "--out",
        s(&c),
    ]);
    assert_ne!(
        fs::read(a.join("dataset.jsonl")).unwrap(),
        fs::read(c.join("dataset.jsonl")).unwrap()
    );
}

#[test]
fn synth_expected_sidecar_and_bad_designs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d");
    ok(&[
        "synth",
        "--design",
        "disjoint",
        "--n",
        "4",
        "--m",
        "4",
        "--out",
        s(&out),
    ]);
    let expected = json(&out.join("expected.json"));
    assert_eq!(expected["dataset_aac"].as_f64(), Some(15.0));

    for args in [
        vec!["--design", "zigzag"],
        vec!["--design", "geometric"],
        vec!["--design", "geometric", "--p", "1.5"],
        vec!["--design", "custom", "--matrix", "12"],
        vec!["--design", "disjoint", "--n", "0"],
    ] {
        let mut full = vec!["synth", "--out", s(&out)];
        full.extend(args.iter().copied());
        assert_eq!(code(&dispersion(&full)), 2, "{args:?}");
    }
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("sweep.conf");
    fs::write(
        &config,
        "# defaults for a sweep\ndesign = disjoint\nn = 2\nm = 2\nn_max = 4\n",
    )
    .unwrap();
    let out = dir.path().join("s");
    ok(&[
        "--config",
        s(&config),
        "synth",
        "--m",
        "4",
        "--out",
        s(&out),
    ]);
    let expected = json(&out.join("expected.json"));
    // n = 2 from the file, m = 4 from the flag: cov [0.5, 1], AAC 100/4 * 0.5
    assert_eq!(expected["n_max"], 4);
    assert_eq!(cov_of(&expected), vec![0.5, 1.0]);
    assert!((expected["dataset_aac"].as_f64().unwrap() - 12.5).abs() < 1e-12);

    fs::write(&config, "n_max = lots\n").unwrap();
    let code2 = code(&dispersion(&[
        "--config",
        s(&config),
        "synth",
        "--design",
        "disjoint",
        "--out",
        s(&out),
    ]));
    assert_eq!(code2, 2);
}

#[test]
fn score_is_idempotent_and_job_independent() {
    let dir = TempDir::new().unwrap();
    let (dataset, alignments) = prepared(
        dir.path(),
        &[
            "--design",
            "random",
            "--density",
            "0.3",
            "--topics",
            "20",
            "--n",
            "6",
            "--m",
            "5",
            "--vary-docs",
        ],
    );
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}"));
        ok(&[
            "--jobs",
            jobs,
            "score",
            s(&dataset),
            s(&alignments),
            "--out",
            s(&out),
        ]);
        outputs.push(
            ["report.json", "per_topic.csv", "curve.csv"].map(|f| fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn tau_sweep_via_score_flag() {
    let dir = TempDir::new().unwrap();
    let (dataset, _) = prepared(
        dir.path(),
        &[
            "--design", "disjoint", "--n", "2", "--m", "2", "--topics", "1",
        ],
    );
    // hand-graded alignments: p0 held by d0 at 0.9, p1 by d1 at 0.6
    let aligned = dir.path().join("graded.jsonl");
    let edge = |p: &str, d: &str, q: &str, score: f64| {
        serde_json::json!({"topic_id": "t0", "summary_id": "ref", "summary_prop": p, "doc_id": d, "doc_prop": q, "score": score})
            .to_string()
    };
    fs::write(
        &aligned,
        [edge("p0", "d0", "q0", 0.9), edge("p1", "d1", "q1", 0.6)].join("\n"),
    )
    .unwrap();
    let low = dir.path().join("low");
    ok(&[
        "score",
        s(&dataset),
        s(&aligned),
        "--tau",
        "0.5",
        "--out",
        s(&low),
    ]);
    assert_eq!(cov_of(&json(&low.join("report.json"))), vec![0.5, 1.0]);
    let high = dir.path().join("high");
    ok(&[
        "score",
        s(&dataset),
        s(&aligned),
        "--tau",
        "0.7",
        "--out",
        s(&high),
    ]);
    let report = json(&high.join("report.json"));
    assert_eq!(cov_of(&report), vec![1.0, 1.0]);
    assert_eq!(report["meta"]["tau"].as_f64(), Some(0.7));
    let out = dispersion(&[
        "score",
        s(&dataset),
        s(&aligned),
        "--tau",
        "1.5",
        "--out",
        s(&high),
    ]);
    assert_eq!(code(&out), 2);
}

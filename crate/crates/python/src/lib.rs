//! Python bindings: `import dispersion`.
use std::path::PathBuf;

use dispersion_core::align::{lexical_score as core_lexical, ScorerKind, ScorerSpec};
use dispersion_core::coverage::{self, BinaryCoverageMap, DEFAULT_N_MAX};
use dispersion_core::ingest;
use dispersion_core::pipeline::{self, ScoreOptions};
use dispersion_core::propositions::{self, Extractor, ExtractorConfig};
use dispersion_core::synth::{self, CoverageDesign, SynthConfig};
use dispersion_core::{AlignmentRelation, DatasetReport, Error, SummaryKind, Topic};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Transport { .. } | Error::Protocol { .. } | Error::Batch { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn map_from_sets(sets: &[Vec<usize>], n_props: usize) -> PyResult<BinaryCoverageMap> {
    BinaryCoverageMap::from_sets(n_props, sets).map_err(to_py)
}

#[pyclass(name = "Proposition", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProposition {
    #[pyo3(get)]
    id: String,
    #[pyo3(get)]
    text: String,
    #[pyo3(get)]
    span: Option<(usize, usize)>,
}

#[pymethods]
impl PyProposition {
    fn __repr__(&self) -> String {
        format!("Proposition({:?}, {:?})", self.id, self.text)
    }
}

#[pyclass(name = "CoverageCurve", frozen, skip_from_py_object)]
struct PyCurve {
    #[pyo3(get)]
    greedy_order: Vec<usize>,
    #[pyo3(get)]
    cov: Vec<f64>,
    #[pyo3(get)]
    denominator: usize,
}

#[pymethods]
impl PyCurve {
    /// Area above the curve in percent, normalized by `n_max`.
    #[pyo3(signature = (n_max = DEFAULT_N_MAX))]
    fn aac(&self, n_max: usize) -> PyResult<f64> {
        aac(self.cov.clone(), n_max)
    }

    fn __repr__(&self) -> String {
        format!(
            "CoverageCurve(cov={:?}, denominator={})",
            self.cov, self.denominator
        )
    }
}

#[pyclass(name = "Topic", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTopic {
    inner: Topic,
}

#[pymethods]
impl PyTopic {
    #[getter]
    fn topic_id(&self) -> &str {
        &self.inner.topic_id
    }

    #[getter]
    fn doc_ids(&self) -> Vec<String> {
        self.inner
            .documents
            .iter()
            .map(|d| d.doc_id.clone())
            .collect()
    }

    #[getter]
    fn summary_ids(&self) -> Vec<String> {
        self.inner
            .summaries
            .iter()
            .map(|s| s.summary_id.clone())
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.inner.n_docs()
    }

    fn __repr__(&self) -> String {
        format!(
            "Topic({:?}, {} documents)",
            self.inner.topic_id,
            self.inner.n_docs()
        )
    }
}

#[pyclass(name = "AlignmentRelation", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRelation {
    inner: AlignmentRelation,
}

#[pymethods]
impl PyRelation {
    #[getter]
    fn topic_id(&self) -> &str {
        &self.inner.topic_id
    }

    #[getter]
    fn summary_id(&self) -> &str {
        &self.inner.summary_id
    }

    /// `(summary_prop, doc_id, doc_prop, score)` for every scored pair.
    #[getter]
    fn edges(&self) -> Vec<(String, String, String, f64)> {
        self.inner
            .edges
            .iter()
            .map(|e| {
                (
                    e.summary_prop.clone(),
                    e.doc_id.clone(),
                    e.doc_prop.clone(),
                    e.score,
                )
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "AlignmentRelation({:?}, {:?}, {} edges)",
            self.inner.topic_id,
            self.inner.summary_id,
            self.inner.edges.len()
        )
    }
}

#[pyclass(name = "Report", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyReport {
    inner: DatasetReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn name(&self) -> &str {
        &self.inner.meta.name
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max
    }

    #[getter]
    fn aggregate_cov(&self) -> Vec<f64> {
        self.inner.aggregate_cov.clone()
    }

    #[getter]
    fn dataset_aac(&self) -> f64 {
        self.inner.dataset_aac
    }

    #[getter]
    fn per_topic_aac(&self) -> Vec<f64> {
        self.inner.per_topic_aac.clone()
    }

    #[getter]
    fn aac_mean(&self) -> f64 {
        self.inner.aac_mean
    }

    #[getter]
    fn aac_std(&self) -> f64 {
        self.inner.aac_std
    }

    #[getter]
    fn topics_evaluated(&self) -> usize {
        self.inner.topics_evaluated
    }

    #[getter]
    fn topics_skipped(&self) -> usize {
        self.inner.topics_skipped
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Report({:?}, dataset_aac={:.4})",
            self.inner.meta.name, self.inner.dataset_aac
        )
    }
}

#[pyclass(name = "Synthetic", frozen, skip_from_py_object)]
struct PySynthetic {
    inner: synth::SynthOutput,
}

#[pymethods]
impl PySynthetic {
    #[getter]
    fn dataset(&self) -> Vec<PyTopic> {
        self.inner
            .dataset
            .iter()
            .cloned()
            .map(|inner| PyTopic { inner })
            .collect()
    }

    #[getter]
    fn alignments(&self) -> Vec<PyRelation> {
        self.inner
            .alignments
            .iter()
            .cloned()
            .map(|inner| PyRelation { inner })
            .collect()
    }

    #[getter]
    fn expected(&self) -> PyReport {
        PyReport {
            inner: self.inner.expected.clone(),
        }
    }

    /// Write `dataset.jsonl`, `alignments.jsonl` and `expected.json` into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&dir)?;
        self.inner.write(&dir).map(|_| ()).map_err(to_py)
    }
}

/// Greedy coverage curve; `sets[d]` lists the summary propositions document `d` covers.
#[pyfunction]
fn greedy_curve(sets: Vec<Vec<usize>>, n_props: usize) -> PyResult<PyCurve> {
    let curve = coverage::greedy_curve(&map_from_sets(&sets, n_props)?).map_err(to_py)?;
    Ok(PyCurve {
        greedy_order: curve.greedy_order,
        cov: curve.cov,
        denominator: curve.denominator,
    })
}

/// Best size-`k` subset by exhaustive search: `(indices, relative coverage)`.
#[pyfunction]
fn exact_best_coverage(
    sets: Vec<Vec<usize>>,
    n_props: usize,
    k: usize,
) -> PyResult<(Vec<usize>, f64)> {
    coverage::exact_best_coverage(&map_from_sets(&sets, n_props)?, k).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (cov, n_max = DEFAULT_N_MAX))]
fn aac(cov: Vec<f64>, n_max: usize) -> PyResult<f64> {
    if n_max == 0 {
        return Err(PyValueError::new_err("n_max must be at least 1"));
    }
    Ok(coverage::aac_percent(&cov, n_max))
}

#[pyfunction]
#[pyo3(signature = (a, b, remove_stopwords = false))]
fn lexical_score(a: &str, b: &str, remove_stopwords: bool) -> f64 {
    let spec = ScorerSpec::new(ScorerKind::Lexical).with_stopword_removal(remove_stopwords);
    core_lexical(a, b, &spec)
}

#[pyfunction]
#[pyo3(signature = (text, min_tokens = 3))]
fn extract_sentences(text: &str, min_tokens: usize) -> PyResult<Vec<PyProposition>> {
    let config = ExtractorConfig::default().with_min_tokens(min_tokens);
    config.validate().map_err(to_py)?;
    Ok(propositions::extract_sentences(text, &config)
        .into_iter()
        .map(|p| PyProposition {
            id: p.id,
            text: p.text,
            span: p.char_span,
        })
        .collect())
}

#[pyfunction]
#[pyo3(signature = (path, limit = None))]
fn load_dataset(path: PathBuf, limit: Option<usize>) -> PyResult<Vec<PyTopic>> {
    Ok(ingest::load_dataset(&path, limit)
        .map_err(to_py)?
        .into_iter()
        .map(|inner| PyTopic { inner })
        .collect())
}

#[pyfunction]
fn load_alignments(path: PathBuf) -> PyResult<Vec<PyRelation>> {
    Ok(ingest::load_alignments(&path)
        .map_err(to_py)?
        .into_iter()
        .map(|inner| PyRelation { inner })
        .collect())
}

/// Align every summary with the lexical scorer; sentences are extracted where needed.
#[pyfunction]
#[pyo3(signature = (topics, tau = 0.5, remove_stopwords = false, jobs = 1))]
fn align_dataset(
    py: Python<'_>,
    topics: Vec<PyRef<'_, PyTopic>>,
    tau: f64,
    remove_stopwords: bool,
    jobs: usize,
) -> PyResult<(Vec<PyTopic>, Vec<PyRelation>)> {
    let topics: Vec<Topic> = topics.iter().map(|t| t.inner.clone()).collect();
    let spec = ScorerSpec::new(ScorerKind::Lexical)
        .with_threshold(tau)
        .map_err(to_py)?
        .with_stopword_removal(remove_stopwords);
    let (topics, relations) = py
        .detach(|| {
            let extractor = Extractor::new(ExtractorConfig::default())?;
            let scorer = spec.build()?;
            pipeline::align_dataset(&topics, &extractor, scorer.as_ref(), None, &spec, jobs)
        })
        .map_err(to_py)?;
    Ok((
        topics.into_iter().map(|inner| PyTopic { inner }).collect(),
        relations
            .into_iter()
            .map(|inner| PyRelation { inner })
            .collect(),
    ))
}

/// One report per group: all references, or one per system.
#[pyfunction]
#[pyo3(signature = (topics, relations, n_max = DEFAULT_N_MAX, tau = 0.5, summary_kind = "reference", jobs = 1, name = "dataset"))]
#[allow(clippy::too_many_arguments)]
fn score_dataset(
    py: Python<'_>,
    topics: Vec<PyRef<'_, PyTopic>>,
    relations: Vec<PyRef<'_, PyRelation>>,
    n_max: usize,
    tau: f64,
    summary_kind: &str,
    jobs: usize,
    name: &str,
) -> PyResult<Vec<PyReport>> {
    let topics: Vec<Topic> = topics.iter().map(|t| t.inner.clone()).collect();
    let relations: Vec<AlignmentRelation> = relations.iter().map(|r| r.inner.clone()).collect();
    let options = ScoreOptions {
        n_max,
        tau,
        summary_kind: summary_kind.parse::<SummaryKind>().map_err(to_py)?,
        jobs,
        name: name.to_string(),
    };
    let groups = py
        .detach(|| pipeline::score_dataset(&topics, &relations, &options))
        .map_err(to_py)?;
    Ok(groups
        .into_iter()
        .map(|g| PyReport { inner: g.report })
        .collect())
}

/// Synthetic dataset with a known expected report.
///
/// `design` is one of `single_doc`, `disjoint`, `geometric` (needs `p`),
/// `random` (needs `density`), `custom` (needs `matrix`) or `motivating`.
#[pyfunction]
#[pyo3(signature = (design, topics = 3, n = 4, m = 4, seed = 0, p = None, density = None, matrix = None, n_max = DEFAULT_N_MAX))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    design: &str,
    topics: usize,
    n: usize,
    m: usize,
    seed: u64,
    p: Option<f64>,
    density: Option<f64>,
    matrix: Option<&str>,
    n_max: usize,
) -> PyResult<PySynthetic> {
    let need = |what: &str| PyValueError::new_err(format!("design {design} needs {what}"));
    let mut config = match design {
        "motivating" => SynthConfig::motivating_replica(),
        other => {
            let design = match other {
                "single_doc" | "single-doc" => CoverageDesign::SingleDoc,
                "disjoint" | "disjoint_uniform" => CoverageDesign::DisjointUniform,
                "geometric" => CoverageDesign::Geometric(p.ok_or_else(|| need("p"))?),
                "random" => CoverageDesign::Random(density.ok_or_else(|| need("density"))?),
                "custom" => CoverageDesign::parse_matrix(matrix.ok_or_else(|| need("matrix"))?)
                    .map_err(to_py)?,
                _ => return Err(PyValueError::new_err(format!("unknown design {other:?}"))),
            };
            SynthConfig::new(design, topics, n, m)
        }
    };
    config.seed = seed;
    config.n_max = n_max;
    let inner = synth::generate(&config).map_err(to_py)?;
    Ok(PySynthetic { inner })
}

/// Source-document dispersion of multi-document summaries.
#[pymodule]
fn dispersion(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProposition>()?;
    m.add_class::<PyCurve>()?;
    m.add_class::<PyTopic>()?;
    m.add_class::<PyRelation>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PySynthetic>()?;
    m.add_function(wrap_pyfunction!(greedy_curve, m)?)?;
    m.add_function(wrap_pyfunction!(exact_best_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(aac, m)?)?;
    m.add_function(wrap_pyfunction!(lexical_score, m)?)?;
    m.add_function(wrap_pyfunction!(extract_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_alignments, m)?)?;
    m.add_function(wrap_pyfunction!(align_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(score_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    Ok(())
}

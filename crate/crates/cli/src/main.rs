//! `dispersion`: align, score, plot and reduce multi-document summarization datasets.
//!
//! Exit codes: 0 success, 1 computation error, 2 usage or I/O error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dispersion_core::align::{ScoreCache, ScorerKind, ScorerSpec, DEFAULT_THRESHOLD};
use dispersion_core::coverage::DEFAULT_N_MAX;
use dispersion_core::ingest::{self, AlignmentMeta, DatasetManifest};
use dispersion_core::pipeline::{align_dataset, score_dataset, ScoreOptions};
use dispersion_core::plot::{render_svg, Series};
use dispersion_core::propositions::{ExtractionMode, Extractor, ExtractorConfig};
use dispersion_core::subsetex::{export_reduced_dataset, traces_path, SummarySelector};
use dispersion_core::synth::{generate, CoverageDesign, SynthConfig};
use dispersion_core::{Error, SummaryKind, Topic};

use config::Settings;

const ENDPOINT_ENV: &str = "DISP_ENDPOINT";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::Io { .. }
                | Error::Record { .. }
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Invalid(_)
                | Error::UnknownReference(_)
                | Error::Mismatch(_)
                | Error::ScoreRange { .. } => 2,
                _ => 1,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(Error::AllSkipped) => f.write_str(
                "every (topic, summary) unit has zero aligned summary propositions; \
                 check the alignment file and --tau",
            ),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "dispersion",
    version,
    about = "Source-document dispersion of summaries"
)]
struct Cli {
    /// `key = value` file with defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads over topics [default: available parallelism].
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract propositions if needed and score every summary/document pair.
    Align(AlignArgs),
    /// Coverage curves and AAC per topic and per dataset.
    Score(ScoreArgs),
    /// Write curve CSVs and an optional SVG chart from reports.
    Curve(CurveArgs),
    /// Reduce every topic to its k maximally-covering documents.
    Subset(SubsetArgs),
    /// Generate a synthetic dataset with a known expected report.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct AlignArgs {
    dataset: PathBuf,
    /// Output alignment file (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// lexical, remote or precomputed.
    #[arg(long)]
    scorer: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Drop stopwords before lexical scoring.
    #[arg(long)]
    stopwords: bool,
    /// Score cache file, read if present and rewritten afterwards.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// sentence, precomputed or external.
    #[arg(long)]
    extractor: Option<String>,
    /// Tuple sidecar for the external extractor.
    #[arg(long)]
    tuples: Option<PathBuf>,
    #[arg(long)]
    min_tokens: Option<usize>,
    /// Existing alignment file to validate with `--scorer precomputed`.
    #[arg(long)]
    alignments: Option<PathBuf>,
    /// System summaries to attach before aligning.
    #[arg(long)]
    systems: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    dataset: PathBuf,
    alignments: PathBuf,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// reference or system.
    #[arg(long)]
    summary_kind: Option<String>,
    /// System summaries to attach before scoring.
    #[arg(long)]
    systems: Option<PathBuf>,
    /// Report name [default: manifest name or file stem].
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    /// `report.json` files or directories holding one.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write `curve.svg`.
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct SubsetArgs {
    dataset: PathBuf,
    alignments: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    /// Select documents for this system's summary instead of the first reference.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    systems: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// single_doc, disjoint, geometric, random, custom or motivating.
    #[arg(long)]
    design: Option<String>,
    /// Geometric parameter.
    #[arg(long)]
    p: Option<f64>,
    /// Edge probability of the random design.
    #[arg(long)]
    density: Option<f64>,
    /// Custom matrix, rows of 0/1 separated by `;`.
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long)]
    topics: Option<usize>,
    /// Documents per topic.
    #[arg(long)]
    n: Option<usize>,
    /// Summary propositions per topic.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Draw each topic's document count from 1..=n.
    #[arg(long)]
    vary_docs: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    let jobs = match settings.pick(cli.jobs, "jobs")? {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    match cli.command {
        Command::Align(args) => align(args, &settings, jobs),
        Command::Score(args) => score(args, &settings, jobs),
        Command::Curve(args) => curve(args, &settings),
        Command::Subset(args) => subset(args, &settings),
        Command::Synth(args) => synth(args, &settings),
    }
}

fn parse_usage<T: std::str::FromStr<Err = Error>>(value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|e: Error| CliError::Usage(e.to_string()))
}

fn load_topics(dataset: &Path, systems: Option<&Path>) -> CliResult<Vec<Topic>> {
    let topics = ingest::load_dataset(dataset, None)?;
    Ok(match systems {
        Some(path) => ingest::load_system_summaries(path, topics)?,
        None => topics,
    })
}

fn extractor(args: &AlignArgs, settings: &Settings) -> CliResult<Extractor> {
    let mode = settings
        .pick(args.extractor.clone(), "extractor")?
        .unwrap_or_else(|| "sentence".into());
    let tuples = settings.pick(args.tuples.clone(), "tuples")?;
    let mode = match (mode.as_str(), tuples) {
        ("sentence", _) => ExtractionMode::Sentence,
        ("precomputed", _) => ExtractionMode::Precomputed,
        ("external", Some(path)) => ExtractionMode::External(path),
        ("external", None) => {
            return Err(CliError::Usage(
                "--extractor external needs --tuples".into(),
            ))
        }
        (other, _) => return Err(CliError::Usage(format!("unknown extractor {other:?}"))),
    };
    let mut config = ExtractorConfig {
        mode,
        ..ExtractorConfig::default()
    };
    if let Some(min) = settings.pick(args.min_tokens, "min-tokens")? {
        config = config.with_min_tokens(min);
    }
    Extractor::new(config).map_err(|e| CliError::Usage(e.to_string()))
}

fn align(args: AlignArgs, settings: &Settings, jobs: usize) -> CliResult<()> {
    let kind: ScorerKind = match settings.pick(args.scorer.clone(), "scorer")? {
        Some(s) => parse_usage(&s)?,
        None => ScorerKind::Lexical,
    };
    let tau = settings.pick(args.tau, "tau")?.unwrap_or(DEFAULT_THRESHOLD);
    let mut spec = ScorerSpec::new(kind)
        .with_threshold(tau)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .with_stopword_removal(settings.flag(args.stopwords, "stopwords")?);
    if let Some(size) = settings.pick(args.batch_size, "batch-size")? {
        spec = spec
            .with_batch_size(size)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let endpoint = settings
        .pick(args.endpoint.clone(), "endpoint")?
        .or_else(|| std::env::var(ENDPOINT_ENV).ok().filter(|v| !v.is_empty()));
    if let Some(endpoint) = endpoint {
        spec = spec.with_endpoint(endpoint);
    } else if kind == ScorerKind::Remote {
        return Err(CliError::Usage(format!(
            "--scorer remote needs --endpoint or {ENDPOINT_ENV}"
        )));
    }

    let extractor = extractor(&args, settings)?;
    let topics = load_topics(
        &args.dataset,
        settings.pick(args.systems.clone(), "systems")?.as_deref(),
    )?;

    let (relations, scorer_id) = if kind == ScorerKind::Precomputed {
        let source = settings
            .pick(args.alignments.clone(), "alignments")?
            .ok_or_else(|| {
                CliError::Usage("--scorer precomputed needs --alignments <file>".into())
            })?;
        let relations = ingest::load_alignments(&source)?;
        let index = ingest::index_relations(&topics, &relations)?;
        for topic in &topics {
            let topic = extractor.ensure(topic)?;
            for summary in &topic.summaries {
                if let Some(r) = index.get(&(topic.topic_id.as_str(), summary.summary_id.as_str()))
                {
                    r.check_against(&topic)?;
                }
            }
        }
        let scorer_id = AlignmentMeta::load_if_present(&source)?
            .map_or_else(|| ingest::PRECOMPUTED_SCORER.to_string(), |m| m.scorer_id);
        (relations, scorer_id)
    } else {
        let scorer = spec.build()?;
        let cache_path = settings.pick(args.cache.clone(), "cache")?;
        let cache = cache_path.as_deref().map(ScoreCache::load).transpose()?;
        let (_, relations) = align_dataset(
            &topics,
            &extractor,
            scorer.as_ref(),
            cache.as_ref(),
            &spec,
            jobs,
        )?;
        if let (Some(cache), Some(path)) = (&cache, &cache_path) {
            cache.save(path)?;
            println!(
                "cache: {} hits, {} misses, {} entries",
                cache.hits(),
                cache.misses(),
                cache.len()
            );
        }
        (relations, scorer.scorer_id())
    };

    ingest::write_alignments(&args.out, &relations)?;
    let meta = AlignmentMeta {
        scorer_id,
        extractor_id: Some(extractor.config().extractor_id()),
        tau,
    };
    ingest::write_json(&AlignmentMeta::path_for(&args.out), &meta)?;
    let pairs: usize = relations.iter().map(|r| r.edges.len()).sum();
    let edges: usize = relations
        .iter()
        .map(|r| r.edges.iter().filter(|e| e.score >= tau).count())
        .sum();
    println!(
        "{} units, {pairs} pairs scored, {edges} edges at tau {tau} -> {}",
        relations.len(),
        args.out.display()
    );
    Ok(())
}

/// Directory-safe form of a system name.
fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        "_".into()
    } else {
        s
    }
}

fn dataset_name(dataset: &Path) -> String {
    DatasetManifest::load(&DatasetManifest::path_for(dataset))
        .map(|m| m.name)
        .unwrap_or_else(|_| {
            dataset
                .file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
        })
}

fn score(args: ScoreArgs, settings: &Settings, jobs: usize) -> CliResult<()> {
    let topics = load_topics(
        &args.dataset,
        settings.pick(args.systems.clone(), "systems")?.as_deref(),
    )?;
    let relations = ingest::load_alignments(&args.alignments)?;
    let meta = AlignmentMeta::load_if_present(&args.alignments)?;
    let summary_kind = match settings.pick(args.summary_kind.clone(), "summary-kind")? {
        Some(s) => parse_usage(&s)?,
        None => SummaryKind::Reference,
    };
    let tau = settings
        .pick(args.tau, "tau")?
        .or(meta.as_ref().map(|m| m.tau))
        .unwrap_or(DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&tau) {
        return Err(CliError::Usage(format!("--tau {tau} is outside [0, 1]")));
    }
    let n_max = settings.pick(args.n_max, "n-max")?.unwrap_or(DEFAULT_N_MAX);
    if n_max == 0 {
        return Err(CliError::Usage("--n-max must be at least 1".into()));
    }
    let options = ScoreOptions {
        n_max,
        tau,
        summary_kind,
        jobs,
        name: match settings.pick(args.name.clone(), "name")? {
            Some(name) => name,
            None => dataset_name(&args.dataset),
        },
    };

    let groups = score_dataset(&topics, &relations, &options)?;
    for mut group in groups {
        if let Some(meta) = &meta {
            group.report.meta.scorer_id = Some(meta.scorer_id.clone());
            group.report.meta.extractor_id = meta.extractor_id.clone();
        }
        let dir = match summary_kind {
            SummaryKind::Reference => args.out.clone(),
            SummaryKind::System => args.out.join(slug(&group.group)),
        };
        ingest::write_report(&group.report, &group.results, &dir)?;
        let r = &group.report;
        println!(
            "{}: dataset AAC {:.4} (per-topic {:.4} +/- {:.4}), {} units evaluated, {} skipped -> {}",
            group.group,
            r.dataset_aac,
            r.aac_mean,
            r.aac_std,
            r.topics_evaluated,
            r.topics_skipped,
            dir.display()
        );
    }
    Ok(())
}

fn curve(args: CurveArgs, settings: &Settings) -> CliResult<()> {
    let series = args
        .reports
        .iter()
        .map(|path| {
            let report = ingest::load_report(path)?;
            if report.aggregate_cov.is_empty() {
                return Err(Error::Invalid(format!("{}: empty curve", path.display())).into());
            }
            Ok(Series {
                name: report.meta.name,
                cov: report.aggregate_cov,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;
    if let [only] = series.as_slice() {
        let path = args.out.join("curve.csv");
        ingest::write_curve_csv(&path, &only.cov)?;
        println!("{}", path.display());
    } else {
        for (i, s) in series.iter().enumerate() {
            let path = args.out.join(format!("curve_{i}_{}.csv", slug(&s.name)));
            ingest::write_curve_csv(&path, &s.cov)?;
            println!("{}", path.display());
        }
    }
    if settings.flag(args.svg, "svg")? {
        let path = args.out.join("curve.svg");
        fs::write(&path, render_svg(&series)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn subset(args: SubsetArgs, settings: &Settings) -> CliResult<()> {
    let k = settings
        .pick(args.k, "k")?
        .ok_or_else(|| CliError::Usage("--k is required".into()))?;
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let topics = load_topics(
        &args.dataset,
        settings.pick(args.systems.clone(), "systems")?.as_deref(),
    )?;
    let relations = ingest::load_alignments(&args.alignments)?;
    let selector = match settings.pick(args.system.clone(), "system")? {
        Some(name) => SummarySelector::System(name),
        None => SummarySelector::Reference,
    };
    let manifest = export_reduced_dataset(&topics, &relations, k, &args.out, &selector)?;
    println!(
        "{} topics reduced to at most {k} documents -> {} (traces in {})",
        manifest.topics,
        args.out.display(),
        traces_path(&args.out).display()
    );
    Ok(())
}

fn design(args: &SynthArgs, settings: &Settings) -> CliResult<Option<CoverageDesign>> {
    let name = settings
        .pick(args.design.clone(), "design")?
        .ok_or_else(|| CliError::Usage("--design is required".into()))?;
    let required = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| CliError::Usage(format!("--design {name} needs --{flag}")))
    };
    Ok(Some(match name.as_str() {
        "single_doc" | "single-doc" => CoverageDesign::SingleDoc,
        "disjoint" | "disjoint_uniform" | "disjoint-uniform" => CoverageDesign::DisjointUniform,
        "geometric" => CoverageDesign::Geometric(required(settings.pick(args.p, "p")?, "p")?),
        "random" => CoverageDesign::Random(required(settings.pick(args.density, "density")?, "density")?),
        "custom" => {
            let matrix = settings
                .pick(args.matrix.clone(), "matrix")?
                .ok_or_else(|| CliError::Usage("--design custom needs --matrix".into()))?;
            CoverageDesign::parse_matrix(&matrix).map_err(|e| CliError::Usage(e.to_string()))?
        }
        "motivating" => return Ok(None),
        other => {
            return Err(CliError::Usage(format!(
                "unknown design {other:?} (single_doc, disjoint, geometric, random, custom, motivating)"
            )))
        }
    }))
}

fn synth(args: SynthArgs, settings: &Settings) -> CliResult<()> {
    let mut config = match design(&args, settings)? {
        None => SynthConfig::motivating_replica(),
        Some(design) => {
            let (rows, cols) = match &design {
                CoverageDesign::Custom(rows) => (rows.len(), rows.first().map_or(0, Vec::len)),
                _ => (4, 4),
            };
            SynthConfig::new(
                design,
                settings.pick(args.topics, "topics")?.unwrap_or(3),
                settings.pick(args.n, "n")?.unwrap_or(rows),
                settings.pick(args.m, "m")?.unwrap_or(cols),
            )
        }
    };
    config.seed = settings.pick(args.seed, "seed")?.unwrap_or(0);
    config.n_max = settings.pick(args.n_max, "n-max")?.unwrap_or(DEFAULT_N_MAX);
    config.vary_docs = settings.flag(args.vary_docs, "vary-docs")?;
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let output = generate(&config)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;
    let files = output.write(&args.out)?;
    println!(
        "{} {} topics, expected dataset AAC {:.4} -> {}",
        output.dataset.len(),
        config.design.name(),
        output.expected.dataset_aac,
        files.dataset.display()
    );
    Ok(())
}

//! How many source documents does a multi-document summary need?
//!
//! Summary and document propositions are aligned, documents are added greedily
//! in order of marginal coverage of the summary, and the area above the
//! resulting `cov_k` curve is the summary's dispersion score.

pub mod align;
pub mod coverage;
mod error;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod propositions;
pub mod subsetex;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    AlignmentEdge, AlignmentRelation, CoverageCurve, DatasetReport, Document, Proposition,
    ReportMeta, SubsetTrace, Summary, SummaryKind, Topic, TopicResult,
};

//! Compliance-aligned ESG violation knowledge graphs from news.
//!
//! The crate turns the ten UN Global Compact principles into an ontology of
//! violation patterns, filters a news corpus, extracts grounded violation
//! triples with a language model, assembles them into an RDF graph, and
//! scores the result against human labels.
//!
//! Every model call goes through [`llm::Gateway`], which caches and replays
//! exchanges so that runs over recorded fixtures are fully deterministic.

pub mod evaluation;
pub mod extraction;
pub mod fsutil;
pub mod ingest;
pub mod kg;
pub mod llm;
pub mod ontology;
pub mod par;
pub mod pattern_forge;
pub mod pipeline;
pub mod prompts;
pub mod rdf;
pub mod structured;
pub mod vocab;

pub use evaluation::{ConfusionCounts, LabeledSample, Metrics, TransitionMatrix};
pub use extraction::{EntityKind, NamedEntity, ViolationEvent};
pub use ingest::NewsArticle;
pub use kg::KnowledgeGraph;
pub use llm::{Gateway, ModelSpec};
pub use ontology::{Principle, ViolationClassDef};
pub use pattern_forge::{PatternId, ReviewState, ViolationPattern};
pub use pipeline::{PipelineConfig, PipelineError};
pub use rdf::{Format, Graph};

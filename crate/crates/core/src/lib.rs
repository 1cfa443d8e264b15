//! Engine for studying storytelling in threaded online conversations.
//!
//! The crate is organized as a pipeline of independent modules:
//!
//! - [`graph`]: typed conversation DAGs (reply edges + sibling-order edges)
//!   with ancestor/peer queries and browsing-context selection.
//! - [`curation`]: score-based story filtering, seeded stratified
//!   train/val/test splits with held-out communities, and fixed-size
//!   per-community sampling.
//! - [`taxonomy`]: the data-driven registry of perspective dimensions,
//!   their slotted sentence templates, and closed sublabel vocabularies.
//! - [`prompt`]: `<<NAME>>` prompt templates and the built-in prompt
//!   catalog used by the summarization, generation, and classification
//!   stages.
//! - [`gateway`]: pluggable text-generation and embedding backends with
//!   retry, bounded concurrency, and a deterministic mock for hermetic
//!   runs.
//! - [`summarize`]: the staged conversation-context summarizer and
//!   community purpose/values summaries, with a call cache.
//! - [`frames`]: slot-template conformance checking, inference
//!   generation (plausible and known-implausible), demo selection for
//!   k-shot prompts, and sublabel classification.
//! - [`analytics`]: label distributions, co-occurrence NPMI, normalized
//!   entropy, community profiles, similarity metrics, and composite
//!   rankings.
//! - [`stats`]: paired one-sided t-tests with Holm-Bonferroni
//!   correction, used to compare inference sets.
//! - [`validation`]: human-rating imports, the implausible-catch
//!   quality filter, and agreement metrics (Jaccard, micro/macro F1).
//! - [`artifact`]: provenance-stamped artifact files (JSON, JSONL, CSV)
//!   shared by all pipeline stages.

pub mod artifact;
pub mod analytics;
pub mod curation;
pub mod frames;
pub mod gateway;
pub mod graph;
pub mod prompt;
pub mod stats;
pub mod summarize;
pub mod taxonomy;
pub mod validation;

/// Version string stamped into every artifact this engine writes.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

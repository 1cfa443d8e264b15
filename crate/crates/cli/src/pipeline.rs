//! The eight pipeline stages and their on-disk artifact contract.
//! Each stage reads the previous stage's artifacts from the output
//! directory, writes provenance-stamped files of its own, and records
//! an input fingerprint so an unchanged re-run becomes a no-op.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ssf_core::analytics::{
    build_community_profile, composite_ranking, group_entropy, normalized_entropy, npmi_matrix,
    ssf_sim_class, ssf_sim_gen, sublabel_distribution, CommunityProfile, LabelDistribution,
    PairScores, StoryLabels, StorySlotEmbeddings,
};
use ssf_core::artifact::{self, ArtifactError, Provenance};
use ssf_core::curation::{
    apply_filters, attach_scores, build_splits, build_stratified, read_score_sidecar,
    CurationReport, ScoredStory,
};
use ssf_core::frames::{
    classify_inference, generate_inferences, FrameError, Inference, LabelAssignment, StoryContext,
};
use ssf_core::gateway::http::{HttpBackendConfig, HttpEmbeddingBackend, HttpTextBackend};
use ssf_core::gateway::mock::{MockEmbeddingBackend, MockTextBackend};
use ssf_core::gateway::{Gateway, GatewayError};
use ssf_core::graph::{group_by_conversation, read_corpus_jsonl, ConversationGraph, GraphSummary,
    OrphanPolicy, RawUtterance};
use ssf_core::summarize::{
    CommunitySummary, ContextSummary, SummarizeConfig, Summarizer, SummaryCache, NONE_MARKER,
};
use ssf_core::taxonomy::{DimensionGroup, TaxonomyRegistry};
use ssf_core::validation::{
    jaccard, multilabel_f1, plausibility_summary, quality_filter, read_ratings_csv,
    write_ratings_csv, CoverageWarning, DiscardedGroup,
};

use crate::config::{load_communities, GatewayMode, RunConfig};
use crate::CliError;

/// Artifact file names, fixed so stages can find each other's output.
pub mod files {
    pub const UTTERANCES: &str = "utterances.jsonl";
    pub const GRAPHS: &str = "graphs.jsonl";
    pub const CURATED: &str = "curated.jsonl";
    pub const SPLITS: &str = "splits.jsonl";
    pub const STRATIFIED: &str = "stratified.jsonl";
    pub const CURATION_REPORT: &str = "curation_report.json";
    pub const CONTEXT_SUMMARIES: &str = "context_summaries.jsonl";
    pub const COMMUNITY_SUMMARIES: &str = "community_summaries.jsonl";
    pub const SUMMARY_CACHE: &str = "summary_cache.jsonl";
    pub const INFERENCES: &str = "inferences.jsonl";
    pub const GENERATION_REPORT: &str = "generation_report.json";
    pub const LABELS: &str = "labels.jsonl";
    pub const CLASSIFICATION_REPORT: &str = "classification_report.json";
    pub const DISTRIBUTIONS: &str = "distributions.json";
    pub const ENTROPY: &str = "entropy.csv";
    pub const PROFILES: &str = "profiles.json";
    pub const SIMILARITY: &str = "similarity.csv";
    pub const RATINGS_KEPT: &str = "ratings_kept.csv";
    pub const PLAUSIBILITY: &str = "plausibility.csv";
    pub const AGREEMENT: &str = "agreement.csv";
    pub const VALIDATION_REPORT: &str = "validation_report.json";
    pub const REPORT: &str = "report.json";

    pub fn npmi(dimension_a: &str, dimension_b: &str) -> String {
        format!("npmi__{dimension_a}__{dimension_b}.csv")
    }
}

/// Which stage produces an artifact, for "run X first" errors.
fn producer_of(artifact: &str) -> &'static str {
    match artifact {
        files::UTTERANCES | files::GRAPHS => "ingest",
        files::CURATED | files::SPLITS | files::STRATIFIED | files::CURATION_REPORT => "curate",
        files::CONTEXT_SUMMARIES | files::COMMUNITY_SUMMARIES | files::SUMMARY_CACHE => {
            "summarize"
        }
        files::INFERENCES | files::GENERATION_REPORT => "generate",
        files::LABELS | files::CLASSIFICATION_REPORT => "classify",
        files::VALIDATION_REPORT | files::RATINGS_KEPT | files::PLAUSIBILITY
        | files::AGREEMENT => "validate",
        files::REPORT => "report",
        _ => "analyze",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Curate,
    Summarize,
    Generate,
    Classify,
    Analyze,
    Validate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Curate,
        Stage::Summarize,
        Stage::Generate,
        Stage::Classify,
        Stage::Analyze,
        Stage::Validate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Curate => "curate",
            Stage::Summarize => "summarize",
            Stage::Generate => "generate",
            Stage::Classify => "classify",
            Stage::Analyze => "analyze",
            Stage::Validate => "validate",
            Stage::Report => "report",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    /// Inputs unchanged and outputs present; nothing rewritten.
    CacheHit,
    /// Turned off in the config's stage toggles (full runs only).
    Disabled,
}

fn artifact_failure(error: ArtifactError) -> CliError {
    CliError::Validation(error.to_string())
}

fn backend_failure(error: GatewayError) -> CliError {
    CliError::Backend(error.to_string())
}

fn frame_failure(error: FrameError) -> CliError {
    match error {
        FrameError::Backend(inner) => backend_failure(inner),
        other => CliError::Validation(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Artifact record shapes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratifiedRecord {
    pub id: String,
    pub community: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSummaryRecord {
    pub story_id: String,
    pub summary: ContextSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReportDoc {
    pub filter: CurationReport,
    pub heldout_communities: BTreeMap<String, String>,
    pub excluded_small_communities: BTreeMap<String, usize>,
    pub heldout_val_fraction: f64,
    pub heldout_test_fraction: f64,
    pub stratified_excluded: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub story_id: String,
    pub dimension: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchReportDoc {
    pub attempted: usize,
    pub produced: usize,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionsDoc {
    pub overall: BTreeMap<String, LabelDistribution>,
    pub by_community: BTreeMap<String, BTreeMap<String, LabelDistribution>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsSection {
    pub total: usize,
    pub kept: usize,
    pub discarded: Vec<DiscardedGroup>,
    pub warnings: Vec<CoverageWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub dimension: String,
    pub items: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub mean_jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReportDoc {
    pub ratings: Option<RatingsSection>,
    pub agreement: Option<Vec<AgreementRow>>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeadline {
    pub conversations: usize,
    pub utterances: usize,
    pub stories_kept: usize,
    pub stories_sampled: usize,
    pub communities: Vec<String>,
    pub inferences: usize,
    pub label_assignments: usize,
    /// (community_a, community_b, composite) of the top-ranked pair.
    pub most_similar_pair: Option<(String, String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub headline: ReportHeadline,
    /// Artifact file name to its SHA-256, for manifest-style
    /// integrity checks.
    pub artifacts: BTreeMap<String, String>,
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

pub struct Pipeline {
    config: RunConfig,
    provenance: Provenance,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        config.validate()?;
        let hash = config.content_hash()?;
        fs::create_dir_all(&config.out_dir).map_err(|e| {
            CliError::Validation(format!(
                "creating output directory {}: {e}",
                config.out_dir.display()
            ))
        })?;
        Ok(Pipeline {
            provenance: Provenance::new(&hash),
            config,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn require_artifact(&self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.out_path(name);
        if !path.exists() {
            return Err(CliError::MissingUpstream {
                artifact: name.to_string(),
                producer: producer_of(name).to_string(),
            });
        }
        Ok(path)
    }

    fn read_records<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>, CliError> {
        let path = self.require_artifact(name)?;
        let (_, records) = artifact::read_jsonl(&path).map_err(artifact_failure)?;
        Ok(records)
    }

    fn write_records<T: Serialize>(&self, name: &str, records: &[T]) -> Result<(), CliError> {
        artifact::write_jsonl(&self.out_path(name), &self.provenance, records)
            .map_err(artifact_failure)
    }

    fn write_document<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        artifact::write_json(&self.out_path(name), &self.provenance, value)
            .map_err(artifact_failure)
    }

    fn write_table(&self, name: &str, csv_text: &str) -> Result<(), CliError> {
        artifact::write_csv(&self.out_path(name), &self.provenance, csv_text)
            .map_err(artifact_failure)
    }

    fn load_registry(&self) -> Result<TaxonomyRegistry, CliError> {
        match &self.config.registry {
            None => Ok(TaxonomyRegistry::builtin()),
            Some(path) => {
                let file = fs::File::open(path).map_err(|e| {
                    CliError::Validation(format!("opening registry {}: {e}", path.display()))
                })?;
                TaxonomyRegistry::load(BufReader::new(file))
                    .map_err(|e| CliError::Validation(format!("loading registry: {e}")))
            }
        }
    }

    fn build_gateway(&self) -> Result<Gateway, CliError> {
        let dimension = self.config.gateway.embedding_dimension;
        match self.config.gateway.mode {
            GatewayMode::Mock => Ok(Gateway::new(Box::new(MockTextBackend::new()))
                .with_embedder(Box::new(MockEmbeddingBackend::new(dimension)))),
            GatewayMode::Http => {
                let settings = self
                    .config
                    .gateway
                    .http
                    .as_ref()
                    .expect("validated: http settings present in http mode");
                let mut text_config =
                    HttpBackendConfig::new(&settings.base_url, &settings.model);
                text_config.api_key_env = settings.api_key_env.clone();
                let mut embed_config =
                    HttpBackendConfig::new(&settings.base_url, &settings.embedding_model);
                embed_config.api_key_env = settings.api_key_env.clone();
                let text = HttpTextBackend::new(text_config).map_err(backend_failure)?;
                let embedder =
                    HttpEmbeddingBackend::new(embed_config, dimension).map_err(backend_failure)?;
                Ok(Gateway::new(Box::new(text)).with_embedder(Box::new(embedder)))
            }
        }
    }

    fn enabled(&self, stage: Stage) -> bool {
        let toggles = &self.config.stages;
        match stage {
            Stage::Ingest => toggles.ingest,
            Stage::Curate => toggles.curate,
            Stage::Summarize => toggles.summarize,
            Stage::Generate => toggles.generate,
            Stage::Classify => toggles.classify,
            Stage::Analyze => toggles.analyze,
            Stage::Validate => toggles.validate,
            Stage::Report => toggles.report,
        }
    }

    /// External input files and upstream artifacts a stage reads.
    /// Upstream artifacts must already exist; their absence is the
    /// "run X first" error.
    fn stage_inputs(&self, stage: Stage) -> Result<Vec<PathBuf>, CliError> {
        let mut inputs = Vec::new();
        match stage {
            Stage::Ingest => inputs.push(self.config.corpus.clone()),
            Stage::Curate => {
                inputs.push(self.config.scores.clone());
                inputs.push(self.require_artifact(files::UTTERANCES)?);
            }
            Stage::Summarize => {
                inputs.push(self.config.communities.clone());
                inputs.push(self.require_artifact(files::UTTERANCES)?);
                inputs.push(self.require_artifact(files::STRATIFIED)?);
            }
            Stage::Generate => {
                inputs.push(self.require_artifact(files::CURATED)?);
                inputs.push(self.require_artifact(files::STRATIFIED)?);
                inputs.push(self.require_artifact(files::CONTEXT_SUMMARIES)?);
                inputs.push(self.require_artifact(files::COMMUNITY_SUMMARIES)?);
            }
            Stage::Classify => inputs.push(self.require_artifact(files::INFERENCES)?),
            Stage::Analyze => {
                inputs.push(self.require_artifact(files::CURATED)?);
                inputs.push(self.require_artifact(files::INFERENCES)?);
                inputs.push(self.require_artifact(files::LABELS)?);
            }
            Stage::Validate => {
                if let Some(ratings) = &self.config.ratings {
                    inputs.push(ratings.clone());
                }
                if let Some(gold) = &self.config.gold_labels {
                    inputs.push(gold.clone());
                    inputs.push(self.require_artifact(files::LABELS)?);
                }
            }
            Stage::Report => {
                for name in [
                    files::GRAPHS,
                    files::UTTERANCES,
                    files::CURATED,
                    files::STRATIFIED,
                    files::CURATION_REPORT,
                    files::INFERENCES,
                    files::LABELS,
                    files::DISTRIBUTIONS,
                    files::SIMILARITY,
                ] {
                    inputs.push(self.require_artifact(name)?);
                }
                for name in self.optional_report_inputs() {
                    inputs.push(self.out_path(&name));
                }
            }
        }
        Ok(inputs)
    }

    /// Validate-stage artifacts that the report includes when present.
    fn optional_report_inputs(&self) -> Vec<String> {
        [
            files::RATINGS_KEPT,
            files::PLAUSIBILITY,
            files::AGREEMENT,
            files::VALIDATION_REPORT,
        ]
        .into_iter()
        .filter(|name| self.out_path(name).exists())
        .map(str::to_string)
        .collect()
    }

    /// Files the stage is expected to leave in the output directory.
    fn stage_outputs(&self, stage: Stage) -> Vec<String> {
        match stage {
            Stage::Ingest => vec![files::UTTERANCES.into(), files::GRAPHS.into()],
            Stage::Curate => vec![
                files::CURATED.into(),
                files::SPLITS.into(),
                files::STRATIFIED.into(),
                files::CURATION_REPORT.into(),
            ],
            Stage::Summarize => vec![
                files::CONTEXT_SUMMARIES.into(),
                files::COMMUNITY_SUMMARIES.into(),
                files::SUMMARY_CACHE.into(),
            ],
            Stage::Generate => vec![files::INFERENCES.into(), files::GENERATION_REPORT.into()],
            Stage::Classify => vec![files::LABELS.into(), files::CLASSIFICATION_REPORT.into()],
            Stage::Analyze => {
                let mut outputs = vec![
                    files::DISTRIBUTIONS.into(),
                    files::ENTROPY.into(),
                    files::PROFILES.into(),
                    files::SIMILARITY.into(),
                ];
                for (a, b) in &self.config.analysis.npmi_pairs {
                    outputs.push(files::npmi(a, b));
                }
                outputs
            }
            Stage::Validate => {
                let mut outputs = vec![files::VALIDATION_REPORT.to_string()];
                if self.config.ratings.is_some() {
                    outputs.push(files::RATINGS_KEPT.into());
                    outputs.push(files::PLAUSIBILITY.into());
                }
                if self.config.gold_labels.is_some() {
                    outputs.push(files::AGREEMENT.into());
                }
                outputs
            }
            Stage::Report => vec![files::REPORT.into()],
        }
    }

    /// Runs one stage, honoring its fingerprint cache.
    pub fn run(&self, stage: Stage) -> Result<StageOutcome, CliError> {
        let inputs = self.stage_inputs(stage)?;
        let fingerprint = artifact::stage_fingerprint(stage.name(), &self.provenance, &inputs)
            .map_err(artifact_failure)?;
        let outputs_present = self
            .stage_outputs(stage)
            .iter()
            .all(|name| self.out_path(name).exists());
        if outputs_present
            && artifact::stage_is_current(&self.config.out_dir, stage.name(), &fingerprint)
        {
            eprintln!("[{}] cache hit: inputs unchanged, outputs current", stage.name());
            return Ok(StageOutcome::CacheHit);
        }
        match stage {
            Stage::Ingest => self.stage_ingest()?,
            Stage::Curate => self.stage_curate()?,
            Stage::Summarize => self.stage_summarize()?,
            Stage::Generate => self.stage_generate()?,
            Stage::Classify => self.stage_classify()?,
            Stage::Analyze => self.stage_analyze()?,
            Stage::Validate => self.stage_validate()?,
            Stage::Report => self.stage_report()?,
        }
        artifact::record_stage(&self.config.out_dir, stage.name(), &fingerprint)
            .map_err(artifact_failure)?;
        Ok(StageOutcome::Ran)
    }

    /// Runs every enabled stage in pipeline order.
    pub fn run_all(&self) -> Result<Vec<(Stage, StageOutcome)>, CliError> {
        let mut outcomes = Vec::new();
        for stage in Stage::ALL {
            if !self.enabled(stage) {
                eprintln!("[{}] disabled in config, skipping", stage.name());
                outcomes.push((stage, StageOutcome::Disabled));
                continue;
            }
            let outcome = self.run(stage)?;
            outcomes.push((stage, outcome));
        }
        Ok(outcomes)
    }

    // -----------------------------------------------------------------
    // Stage bodies
    // -----------------------------------------------------------------

    fn stage_ingest(&self) -> Result<(), CliError> {
        let file = fs::File::open(&self.config.corpus).map_err(|e| {
            CliError::Validation(format!(
                "opening corpus {}: {e}",
                self.config.corpus.display()
            ))
        })?;
        let records = read_corpus_jsonl(BufReader::new(file))
            .map_err(|e| CliError::Validation(format!("reading corpus: {e}")))?;
        let groups = group_by_conversation(records);
        let mut utterances: Vec<RawUtterance> = Vec::new();
        let mut summaries: Vec<GraphSummary> = Vec::new();
        for (conversation_id, group) in &groups {
            let graph =
                ConversationGraph::build(group, OrphanPolicy::Reject).map_err(|e| {
                    CliError::Validation(format!("conversation {conversation_id}: {e}"))
                })?;
            summaries.push(graph.summary());
            utterances.extend(group.iter().cloned());
        }
        utterances.sort_by(|a, b| {
            (&a.conversation_id, a.timestamp, &a.id).cmp(&(&b.conversation_id, b.timestamp, &b.id))
        });
        self.write_records(files::UTTERANCES, &utterances)?;
        self.write_records(files::GRAPHS, &summaries)?;
        eprintln!(
            "[ingest] built {} conversation graphs over {} utterances",
            summaries.len(),
            utterances.len()
        );
        Ok(())
    }

    fn stage_curate(&self) -> Result<(), CliError> {
        let utterances: Vec<RawUtterance> = self.read_records(files::UTTERANCES)?;
        let sidecar_file = fs::File::open(&self.config.scores).map_err(|e| {
            CliError::Validation(format!("opening scores {}: {e}", self.config.scores.display()))
        })?;
        let sidecar = read_score_sidecar(BufReader::new(sidecar_file))
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let candidates: Vec<(String, String, String)> = utterances
            .iter()
            .map(|u| (u.id.clone(), u.subreddit.clone(), u.text.clone()))
            .collect();
        let scored =
            attach_scores(&candidates, &sidecar).map_err(|e| CliError::Validation(e.to_string()))?;
        let curation = self.config.effective_curation();
        let outcome = apply_filters(&scored, &curation);
        let kept_ids: BTreeSet<&str> = outcome.kept.iter().map(String::as_str).collect();
        let mut kept: Vec<ScoredStory> = scored
            .iter()
            .filter(|s| kept_ids.contains(s.id.as_str()))
            .cloned()
            .collect();
        kept.sort_by(|a, b| a.id.cmp(&b.id));
        let splits =
            build_splits(&kept, &curation).map_err(|e| CliError::Validation(e.to_string()))?;
        let sample = build_stratified(&kept, &curation);

        self.write_records(files::CURATED, &kept)?;
        self.write_records(files::SPLITS, &splits.assignments)?;
        let stratified: Vec<StratifiedRecord> = sample
            .stories
            .iter()
            .map(|(id, community)| StratifiedRecord {
                id: id.clone(),
                community: community.clone(),
            })
            .collect();
        self.write_records(files::STRATIFIED, &stratified)?;
        let report = CurationReportDoc {
            filter: outcome.report(),
            heldout_communities: splits
                .heldout_communities
                .iter()
                .map(|(community, split)| (community.clone(), split.to_string()))
                .collect(),
            excluded_small_communities: splits.excluded_small_communities.clone(),
            heldout_val_fraction: splits.heldout_val_fraction,
            heldout_test_fraction: splits.heldout_test_fraction,
            stratified_excluded: sample.excluded.clone(),
        };
        self.write_document(files::CURATION_REPORT, &report)?;
        eprintln!(
            "[curate] kept {} of {} stories; sampled {} for annotation",
            kept.len(),
            scored.len(),
            stratified.len()
        );
        Ok(())
    }

    fn stage_summarize(&self) -> Result<(), CliError> {
        let utterances: Vec<RawUtterance> = self.read_records(files::UTTERANCES)?;
        let stratified: Vec<StratifiedRecord> = self.read_records(files::STRATIFIED)?;
        let communities_meta = load_communities(&self.config.communities)?;
        let conversation_of: BTreeMap<&str, &str> = utterances
            .iter()
            .map(|u| (u.id.as_str(), u.conversation_id.as_str()))
            .collect();
        let groups = group_by_conversation(utterances.clone());

        let gateway = self.build_gateway()?;
        let summarizer = Summarizer::new(
            &gateway,
            SummarizeConfig {
                passthrough_max_chars: self.config.summarize.passthrough_max_chars,
            },
        );
        let mut cache = self.load_summary_cache();

        let mut targets_by_conversation: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for record in &stratified {
            let conversation = conversation_of.get(record.id.as_str()).ok_or_else(|| {
                CliError::Validation(format!(
                    "stratified story {} is not in the ingested corpus",
                    record.id
                ))
            })?;
            targets_by_conversation
                .entry(conversation)
                .or_default()
                .push(&record.id);
        }

        let mut context_records = Vec::new();
        let mut failure_count = 0usize;
        for (conversation, targets) in targets_by_conversation {
            let group = &groups[conversation];
            let graph = ConversationGraph::build(group, OrphanPolicy::Reject)
                .map_err(|e| CliError::Validation(format!("conversation {conversation}: {e}")))?;
            for target in targets {
                let window = graph
                    .select_context(
                        target,
                        self.config.summarize.k_anc,
                        self.config.summarize.k_peer,
                    )
                    .map_err(|e| CliError::Validation(e.to_string()))?;
                let summary = summarizer.summarize_context(&window, &mut cache);
                failure_count += summary.failures.len();
                context_records.push(ContextSummaryRecord {
                    story_id: target.to_string(),
                    summary,
                });
            }
        }
        context_records.sort_by(|a, b| a.story_id.cmp(&b.story_id));

        let communities: BTreeSet<&str> =
            stratified.iter().map(|r| r.community.as_str()).collect();
        let mut community_records = Vec::new();
        for community in communities {
            let meta = communities_meta.get(community).cloned().unwrap_or_default();
            let summary = summarizer.summarize_community(
                community,
                meta.description.as_deref(),
                meta.rules.as_deref(),
                &mut cache,
            );
            failure_count += summary.failures.len();
            community_records.push(summary);
        }

        self.write_records(files::CONTEXT_SUMMARIES, &context_records)?;
        self.write_records(files::COMMUNITY_SUMMARIES, &community_records)?;
        self.store_summary_cache(&cache)?;
        eprintln!(
            "[summarize] {} story contexts, {} communities, {} stage failures",
            context_records.len(),
            community_records.len(),
            failure_count
        );
        Ok(())
    }

    fn load_summary_cache(&self) -> SummaryCache {
        let path = self.out_path(files::SUMMARY_CACHE);
        let Ok(text) = fs::read_to_string(&path) else {
            return SummaryCache::new();
        };
        let body = match text.split_once('\n') {
            Some((first, rest)) if first.contains("\"meta\"") => rest,
            _ => text.as_str(),
        };
        SummaryCache::read_jsonl(body.as_bytes()).unwrap_or_default()
    }

    fn store_summary_cache(&self, cache: &SummaryCache) -> Result<(), CliError> {
        let mut body = Vec::new();
        cache
            .write_jsonl(&mut body)
            .map_err(|e| CliError::Validation(format!("writing summary cache: {e}")))?;
        let meta = serde_json::json!({"meta": self.provenance});
        let mut text = meta.to_string();
        text.push('\n');
        text.push_str(&String::from_utf8(body).expect("cache lines are UTF-8 JSON"));
        fs::write(self.out_path(files::SUMMARY_CACHE), text)
            .map_err(|e| CliError::Validation(format!("writing summary cache: {e}")))
    }

    fn stage_generate(&self) -> Result<(), CliError> {
        let registry = self.load_registry()?;
        let curated: Vec<ScoredStory> = self.read_records(files::CURATED)?;
        let stratified: Vec<StratifiedRecord> = self.read_records(files::STRATIFIED)?;
        let contexts: Vec<ContextSummaryRecord> = self.read_records(files::CONTEXT_SUMMARIES)?;
        let communities: Vec<CommunitySummary> = self.read_records(files::COMMUNITY_SUMMARIES)?;

        let text_of: BTreeMap<&str, &str> = curated
            .iter()
            .map(|s| (s.id.as_str(), s.scores.masked_text.as_str()))
            .collect();
        let context_of: BTreeMap<&str, &ContextSummary> = contexts
            .iter()
            .map(|r| (r.story_id.as_str(), &r.summary))
            .collect();
        let community_of: BTreeMap<&str, &CommunitySummary> = communities
            .iter()
            .map(|c| (c.community.as_str(), c))
            .collect();

        let gateway = self.build_gateway()?;
        let n = self.config.generation.inferences_per_dimension;
        let retry_cap = self.config.generation.retry_cap;
        let mut inferences: Vec<Inference> = Vec::new();
        let mut failures: Vec<FailureRecord> = Vec::new();
        let mut backend_failures = 0usize;
        let mut attempted = 0usize;

        for record in &stratified {
            let summary = context_of.get(record.id.as_str()).ok_or_else(|| {
                CliError::Validation(format!(
                    "story {} has no context summary; rerun summarize",
                    record.id
                ))
            })?;
            let text = text_of.get(record.id.as_str()).ok_or_else(|| {
                CliError::Validation(format!(
                    "story {} is not in the curated set; rerun curate",
                    record.id
                ))
            })?;
            let community = community_of.get(record.community.as_str());
            let none = || NONE_MARKER.to_string();
            let context = StoryContext {
                community_name: record.community.clone(),
                community_description: community
                    .and_then(|c| c.purpose_summary.clone())
                    .unwrap_or_else(none),
                community_values: community
                    .and_then(|c| c.values_summary.clone())
                    .unwrap_or_else(none),
                initial_post_summary: summary.initial_post_summary.clone().unwrap_or_else(none),
                conversation_summary: summary.conversation_summary.clone().unwrap_or_else(none),
                current_text: text.to_string(),
            };
            for dimension_id in registry.dimension_ids() {
                let dimension = registry
                    .dimension(dimension_id)
                    .map_err(|e| CliError::Validation(e.to_string()))?;
                attempted += n;
                let results =
                    generate_inferences(&record.id, &context, dimension, &gateway, n, retry_cap)
                        .map_err(frame_failure)?;
                for result in results {
                    match result {
                        Ok(inference) => inferences.push(inference),
                        Err(error) => {
                            if matches!(error, FrameError::Backend(_)) {
                                backend_failures += 1;
                            }
                            failures.push(FailureRecord {
                                story_id: record.id.clone(),
                                dimension: dimension_id.to_string(),
                                message: error.to_string(),
                            });
                        }
                    }
                }
            }
        }
        if inferences.is_empty() && backend_failures > 0 {
            return Err(CliError::Backend(format!(
                "all {backend_failures} generation attempts failed at the backend"
            )));
        }
        let produced = inferences.len();
        self.write_records(files::INFERENCES, &inferences)?;
        self.write_document(
            files::GENERATION_REPORT,
            &BatchReportDoc {
                attempted,
                produced,
                failures,
            },
        )?;
        eprintln!("[generate] produced {produced} of {attempted} requested inferences");
        Ok(())
    }

    fn stage_classify(&self) -> Result<(), CliError> {
        let registry = self.load_registry()?;
        let inferences: Vec<Inference> = self.read_records(files::INFERENCES)?;
        let gateway = self.build_gateway()?;
        let retry_cap = self.config.generation.retry_cap;

        let mut labels: Vec<LabelAssignment> = Vec::new();
        let mut failures: Vec<FailureRecord> = Vec::new();
        let mut backend_failures = 0usize;
        for inference in &inferences {
            match classify_inference(inference, &registry, &gateway, &[], retry_cap) {
                Ok(assignment) => labels.push(assignment),
                Err(error) => {
                    if matches!(error, FrameError::Backend(_)) {
                        backend_failures += 1;
                    }
                    failures.push(FailureRecord {
                        story_id: inference.story_id.clone(),
                        dimension: inference.dimension.clone(),
                        message: error.to_string(),
                    });
                }
            }
        }
        if labels.is_empty() && backend_failures > 0 {
            return Err(CliError::Backend(format!(
                "all {backend_failures} classification attempts failed at the backend"
            )));
        }
        let labeled = labels.len();
        let attempted = inferences.len();
        self.write_records(files::LABELS, &labels)?;
        self.write_document(
            files::CLASSIFICATION_REPORT,
            &BatchReportDoc {
                attempted,
                produced: labeled,
                failures,
            },
        )?;
        eprintln!("[classify] labeled {labeled} of {attempted} inferences");
        Ok(())
    }

    fn stage_analyze(&self) -> Result<(), CliError> {
        let registry = self.load_registry()?;
        let curated: Vec<ScoredStory> = self.read_records(files::CURATED)?;
        let inferences: Vec<Inference> = self.read_records(files::INFERENCES)?;
        let labels: Vec<LabelAssignment> = self.read_records(files::LABELS)?;

        let story_community: BTreeMap<String, String> = curated
            .iter()
            .map(|s| (s.id.clone(), s.community.clone()))
            .collect();
        let labeled_communities: BTreeSet<String> = labels
            .iter()
            .filter_map(|a| story_community.get(&a.story_id).cloned())
            .collect();

        let mut overall = BTreeMap::new();
        let mut by_community: BTreeMap<String, BTreeMap<String, LabelDistribution>> =
            BTreeMap::new();
        for dimension_id in registry.dimension_ids() {
            let dimension = registry
                .dimension(dimension_id)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            overall.insert(
                dimension_id.to_string(),
                sublabel_distribution(&labels, dimension, None),
            );
            for community in &labeled_communities {
                let distribution =
                    sublabel_distribution(&labels, dimension, Some((community, &story_community)));
                by_community
                    .entry(community.clone())
                    .or_default()
                    .insert(dimension_id.to_string(), distribution);
            }
        }
        self.write_document(
            files::DISTRIBUTIONS,
            &DistributionsDoc {
                overall: overall.clone(),
                by_community: by_community.clone(),
            },
        )?;

        let profiles = self.build_profiles(&registry, &inferences, &labels, &story_community)?;
        self.write_document(files::PROFILES, &profiles)?;

        self.write_entropy_table(&registry, &overall, &profiles)?;
        self.write_npmi_tables(&registry, &labels)?;
        self.write_similarity_table(&registry, &profiles)?;
        eprintln!(
            "[analyze] {} label assignments over {} communities",
            labels.len(),
            labeled_communities.len()
        );
        Ok(())
    }

    /// Pools slot embeddings per community. Each (story, dimension)
    /// contributes its first inference's slot fills, embedded and
    /// normalized by the gateway.
    fn build_profiles(
        &self,
        registry: &TaxonomyRegistry,
        inferences: &[Inference],
        labels: &[LabelAssignment],
        story_community: &BTreeMap<String, String>,
    ) -> Result<BTreeMap<String, CommunityProfile>, CliError> {
        let mut first_inference: BTreeMap<(&str, &str), &Inference> = BTreeMap::new();
        for inference in inferences {
            first_inference
                .entry((inference.story_id.as_str(), inference.dimension.as_str()))
                .or_insert(inference);
        }

        let mut texts: Vec<String> = Vec::new();
        let mut plan: Vec<(&str, &str, usize)> = Vec::new();
        for ((story, dimension_id), inference) in &first_inference {
            let dimension = registry
                .dimension(dimension_id)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            plan.push((story, dimension_id, dimension.slots.len()));
            for slot in &dimension.slots {
                let fill = inference.slot_values.get(slot).ok_or_else(|| {
                    CliError::Validation(format!(
                        "inference for {story}/{dimension_id} lacks slot {slot}"
                    ))
                })?;
                texts.push(fill.clone());
            }
        }
        let gateway = self.build_gateway()?;
        let vectors = gateway.embed(&texts, true).map_err(backend_failure)?;

        let mut embeddings_by_story: BTreeMap<&str, StorySlotEmbeddings> = BTreeMap::new();
        let mut cursor = 0usize;
        for (story, dimension_id, slot_count) in plan {
            let slot_vectors: Vec<Vec<f64>> = vectors[cursor..cursor + slot_count]
                .iter()
                .map(|v| v.values.clone())
                .collect();
            cursor += slot_count;
            embeddings_by_story
                .entry(story)
                .or_insert_with(|| StorySlotEmbeddings {
                    story_id: story.to_string(),
                    slots: BTreeMap::new(),
                })
                .slots
                .insert(dimension_id.to_string(), slot_vectors);
        }

        let mut stories_by_community: BTreeMap<&str, Vec<StorySlotEmbeddings>> = BTreeMap::new();
        for (story, embeddings) in embeddings_by_story {
            let community = story_community.get(story).ok_or_else(|| {
                CliError::Validation(format!("story {story} is not in the curated set"))
            })?;
            stories_by_community
                .entry(community)
                .or_default()
                .push(embeddings);
        }

        let mut profiles = BTreeMap::new();
        for (community, stories) in stories_by_community {
            let community_labels: Vec<LabelAssignment> = labels
                .iter()
                .filter(|a| story_community.get(&a.story_id).map(String::as_str) == Some(community))
                .cloned()
                .collect();
            let profile = build_community_profile(community, &stories, &community_labels, registry)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            profiles.insert(community.to_string(), profile);
        }
        Ok(profiles)
    }

    fn write_entropy_table(
        &self,
        registry: &TaxonomyRegistry,
        overall: &BTreeMap<String, LabelDistribution>,
        profiles: &BTreeMap<String, CommunityProfile>,
    ) -> Result<(), CliError> {
        let overall_profile = CommunityProfile {
            community: "_overall".to_string(),
            story_count: 0,
            embeddings: BTreeMap::new(),
            distributions: overall.clone(),
            slot_counts: BTreeMap::new(),
        };
        let mut table = String::from("community,scope,name,value\n");
        let mut scopes: Vec<(&str, &CommunityProfile)> = vec![("_overall", &overall_profile)];
        scopes.extend(profiles.iter().map(|(name, p)| (name.as_str(), p)));
        for (name, profile) in scopes {
            for dimension_id in registry.dimension_ids() {
                let Some(distribution) = profile.distributions.get(dimension_id) else {
                    continue;
                };
                if !distribution.is_defined() {
                    continue;
                }
                let entropy = normalized_entropy(distribution);
                table.push_str(&format!(
                    "{name},dimension,{dimension_id},{:.6}\n",
                    entropy.value
                ));
            }
            for (group, label) in [
                (DimensionGroup::AuthorCentric, "author_centric"),
                (DimensionGroup::ReaderCentric, "reader_centric"),
            ] {
                if let Some(value) = group_entropy(profile, group, registry) {
                    table.push_str(&format!("{name},group,{label},{value:.6}\n"));
                }
            }
        }
        self.write_table(files::ENTROPY, &table)
    }

    fn write_npmi_tables(
        &self,
        registry: &TaxonomyRegistry,
        labels: &[LabelAssignment],
    ) -> Result<(), CliError> {
        let mut stories: BTreeMap<&str, StoryLabels> = BTreeMap::new();
        for assignment in labels {
            let entry = stories
                .entry(&assignment.story_id)
                .or_insert_with(|| StoryLabels {
                    story_id: assignment.story_id.clone(),
                    labels: BTreeMap::new(),
                });
            entry
                .labels
                .entry(assignment.dimension.clone())
                .or_default()
                .extend(assignment.labels.iter().cloned());
        }
        let stories: Vec<StoryLabels> = stories.into_values().collect();
        for (a, b) in &self.config.analysis.npmi_pairs {
            let dimension_a = registry
                .dimension(a)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let dimension_b = registry
                .dimension(b)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let matrix = npmi_matrix(&stories, dimension_a, dimension_b);
            self.write_table(&files::npmi(a, b), &matrix.to_csv())?;
        }
        Ok(())
    }

    fn write_similarity_table(
        &self,
        registry: &TaxonomyRegistry,
        profiles: &BTreeMap<String, CommunityProfile>,
    ) -> Result<(), CliError> {
        let names: Vec<&String> = profiles.keys().collect();
        let mut pairs = Vec::new();
        for (index, a) in names.iter().enumerate() {
            for b in &names[index + 1..] {
                let gen = ssf_sim_gen(&profiles[*a], &profiles[*b], registry);
                let class = ssf_sim_class(
                    &profiles[*a],
                    &profiles[*b],
                    registry,
                    self.config.analysis.js_mode,
                );
                match (gen.value, class.value) {
                    (Some(gen_score), Some(class_score)) => pairs.push(PairScores {
                        a: (*a).clone(),
                        b: (*b).clone(),
                        gen_score,
                        class_score,
                    }),
                    _ => eprintln!(
                        "[analyze] skipping pair {a}/{b}: no comparable dimensions"
                    ),
                }
            }
        }
        let ranking = composite_ranking(&pairs, self.config.analysis.lambda_rank)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        self.write_table(files::SIMILARITY, &ranking.to_csv())
    }

    fn stage_validate(&self) -> Result<(), CliError> {
        let registry = self.load_registry()?;
        let mut skipped = Vec::new();
        let mut ratings_section = None;
        if let Some(ratings_path) = &self.config.ratings {
            let file = fs::File::open(ratings_path).map_err(|e| {
                CliError::Validation(format!("opening ratings {}: {e}", ratings_path.display()))
            })?;
            let records = read_ratings_csv(BufReader::new(file))
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let expected: Vec<String> =
                registry.dimension_ids().iter().map(|d| d.to_string()).collect();
            let outcome = quality_filter(&records, &expected);
            let mut kept_csv = Vec::new();
            write_ratings_csv(&mut kept_csv, &outcome.kept)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            self.write_table(
                files::RATINGS_KEPT,
                &String::from_utf8(kept_csv).expect("csv output is UTF-8"),
            )?;
            self.write_table(
                files::PLAUSIBILITY,
                &plausibility_summary(&outcome.kept).to_csv(),
            )?;
            ratings_section = Some(RatingsSection {
                total: records.len(),
                kept: outcome.kept.len(),
                discarded: outcome.discarded,
                warnings: outcome.warnings,
            });
        } else {
            skipped.push("ratings: no survey export configured".to_string());
        }

        let mut agreement_section = None;
        if let Some(gold_path) = &self.config.gold_labels {
            let predictions: Vec<LabelAssignment> = self.read_records(files::LABELS)?;
            let gold = read_plain_labels(gold_path)?;
            let rows = agreement_rows(&predictions, &gold)?;
            let mut table =
                String::from("dimension,items,micro_f1,macro_f1,mean_jaccard\n");
            for row in &rows {
                table.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6}\n",
                    row.dimension, row.items, row.micro_f1, row.macro_f1, row.mean_jaccard
                ));
            }
            self.write_table(files::AGREEMENT, &table)?;
            agreement_section = Some(rows);
        } else {
            skipped.push("agreement: no gold labels configured".to_string());
        }

        let kept = ratings_section.as_ref().map(|r| r.kept).unwrap_or(0);
        let discarded = ratings_section
            .as_ref()
            .map(|r| r.discarded.len())
            .unwrap_or(0);
        self.write_document(
            files::VALIDATION_REPORT,
            &ValidationReportDoc {
                ratings: ratings_section,
                agreement: agreement_section,
                skipped,
            },
        )?;
        eprintln!(
            "[validate] kept {kept} ratings, discarded {discarded} annotator-story groups"
        );
        Ok(())
    }

    fn stage_report(&self) -> Result<(), CliError> {
        let graphs: Vec<GraphSummary> = self.read_records(files::GRAPHS)?;
        let utterances: Vec<RawUtterance> = self.read_records(files::UTTERANCES)?;
        let curated: Vec<ScoredStory> = self.read_records(files::CURATED)?;
        let stratified: Vec<StratifiedRecord> = self.read_records(files::STRATIFIED)?;
        let inferences: Vec<Inference> = self.read_records(files::INFERENCES)?;
        let labels: Vec<LabelAssignment> = self.read_records(files::LABELS)?;

        let communities: BTreeSet<String> =
            curated.iter().map(|s| s.community.clone()).collect();
        let most_similar_pair = self.top_ranked_pair()?;

        let mut names: Vec<String> = vec![
            files::GRAPHS.into(),
            files::UTTERANCES.into(),
            files::CURATED.into(),
            files::SPLITS.into(),
            files::STRATIFIED.into(),
            files::CURATION_REPORT.into(),
            files::CONTEXT_SUMMARIES.into(),
            files::COMMUNITY_SUMMARIES.into(),
            files::INFERENCES.into(),
            files::GENERATION_REPORT.into(),
            files::LABELS.into(),
            files::CLASSIFICATION_REPORT.into(),
            files::DISTRIBUTIONS.into(),
            files::ENTROPY.into(),
            files::PROFILES.into(),
            files::SIMILARITY.into(),
        ];
        for (a, b) in &self.config.analysis.npmi_pairs {
            names.push(files::npmi(a, b));
        }
        names.extend(self.optional_report_inputs());
        let mut artifacts = BTreeMap::new();
        for name in names {
            let path = self.out_path(&name);
            if !path.exists() {
                return Err(CliError::MissingUpstream {
                    artifact: name.clone(),
                    producer: producer_of(&name).to_string(),
                });
            }
            let bytes = fs::read(&path).map_err(|e| {
                CliError::Validation(format!("reading {}: {e}", path.display()))
            })?;
            artifacts.insert(name, artifact::sha256_hex(&bytes));
        }

        let report = ReportDoc {
            headline: ReportHeadline {
                conversations: graphs.len(),
                utterances: utterances.len(),
                stories_kept: curated.len(),
                stories_sampled: stratified.len(),
                communities: communities.into_iter().collect(),
                inferences: inferences.len(),
                label_assignments: labels.len(),
                most_similar_pair,
            },
            artifacts,
        };
        self.write_document(files::REPORT, &report)?;
        eprintln!("[report] bundled {} artifacts", report.artifacts.len());
        Ok(())
    }

    /// First data row of the similarity ranking, if any.
    fn top_ranked_pair(&self) -> Result<Option<(String, String, String)>, CliError> {
        let path = self.require_artifact(files::SIMILARITY)?;
        let (_, body) = artifact::read_csv(&path).map_err(artifact_failure)?;
        let Some(line) = body.lines().nth(1) else {
            return Ok(None);
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 {
            return Ok(None);
        }
        Ok(Some((
            fields[0].to_string(),
            fields[1].to_string(),
            fields[6].to_string(),
        )))
    }
}

/// Reads a plain JSONL file of label assignments (no provenance line),
/// the format gold annotations arrive in.
fn read_plain_labels(path: &Path) -> Result<Vec<LabelAssignment>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("reading {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: LabelAssignment = serde_json::from_str(line).map_err(|e| {
            CliError::Validation(format!("{} line {}: {e}", path.display(), index + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Per-dimension agreement between model predictions and gold labels,
/// paired by story id. Stories the model never labeled count as empty
/// predictions.
fn agreement_rows(
    predictions: &[LabelAssignment],
    gold: &[LabelAssignment],
) -> Result<Vec<AgreementRow>, CliError> {
    let mut predicted: BTreeMap<&str, BTreeMap<String, BTreeSet<String>>> = BTreeMap::new();
    for assignment in predictions {
        predicted
            .entry(&assignment.dimension)
            .or_default()
            .entry(assignment.story_id.clone())
            .or_default()
            .extend(assignment.labels.iter().cloned());
    }
    let mut gold_by_dimension: BTreeMap<&str, BTreeMap<String, BTreeSet<String>>> =
        BTreeMap::new();
    for assignment in gold {
        gold_by_dimension
            .entry(&assignment.dimension)
            .or_default()
            .entry(assignment.story_id.clone())
            .or_default()
            .extend(assignment.labels.iter().cloned());
    }

    let mut rows = Vec::new();
    for (dimension, gold_map) in gold_by_dimension {
        let empty = BTreeMap::new();
        let dimension_predictions = predicted.get(dimension).unwrap_or(&empty);
        let paired: BTreeMap<String, BTreeSet<String>> = gold_map
            .keys()
            .filter_map(|story| {
                dimension_predictions
                    .get(story)
                    .map(|labels| (story.clone(), labels.clone()))
            })
            .collect();
        let report = multilabel_f1(&paired, &gold_map, dimension)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let empty_set = BTreeSet::new();
        let jaccard_sum: f64 = gold_map
            .iter()
            .map(|(story, gold_labels)| {
                jaccard(
                    dimension_predictions.get(story).unwrap_or(&empty_set),
                    gold_labels,
                )
            })
            .sum();
        rows.push(AgreementRow {
            dimension: dimension.to_string(),
            items: gold_map.len(),
            micro_f1: report.micro_f1,
            macro_f1: report.macro_f1,
            mean_jaccard: jaccard_sum / gold_map.len() as f64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for stage in Stage::ALL {
            assert_eq!(Stage::from_name(stage.name()), Some(stage));
        }
        assert_eq!(Stage::from_name("nonsense"), None);
    }

    #[test]
    fn producers_cover_every_fixed_artifact() {
        assert_eq!(producer_of(files::UTTERANCES), "ingest");
        assert_eq!(producer_of(files::STRATIFIED), "curate");
        assert_eq!(producer_of(files::CONTEXT_SUMMARIES), "summarize");
        assert_eq!(producer_of(files::INFERENCES), "generate");
        assert_eq!(producer_of(files::LABELS), "classify");
        assert_eq!(producer_of(files::DISTRIBUTIONS), "analyze");
        assert_eq!(producer_of(&files::npmi("a", "b")), "analyze");
        assert_eq!(producer_of(files::VALIDATION_REPORT), "validate");
    }

    #[test]
    fn agreement_rows_pair_by_story_and_tolerate_missing_predictions() {
        let assignment = |story: &str, dimension: &str, labels: &[&str]| LabelAssignment {
            story_id: story.to_string(),
            dimension: dimension.to_string(),
            rendered_text: String::new(),
            labels: labels.iter().map(|l| l.to_string()).collect(),
            source: ssf_core::frames::LabelSource::Model,
        };
        let predictions = vec![
            assignment("s1", "stance", &["support_belief_norm"]),
            assignment("s3", "stance", &["counter_belief_norm"]),
        ];
        let gold = vec![
            assignment("s1", "stance", &["support_belief_norm"]),
            assignment("s2", "stance", &["counter_belief_norm"]),
        ];
        let rows = agreement_rows(&predictions, &gold).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.dimension, "stance");
        assert_eq!(row.items, 2);
        // s1 agrees exactly, s2 has no prediction: mean Jaccard 0.5,
        // micro F1 from tp=1, fn=1.
        assert!((row.mean_jaccard - 0.5).abs() < 1e-12);
        assert!((row.micro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }
}

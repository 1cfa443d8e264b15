//! Run configuration: one JSON document describing inputs, gateway,
//! per-stage settings, and the output directory. Relative paths
//! resolve against the config file's directory, and command-line
//! overrides apply before validation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssf_core::analytics::JsMode;
use ssf_core::curation::CurationConfig;

use crate::CliError;

/// Which backend the pipeline talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayMode {
    #[default]
    Mock,
    Http,
}

/// Endpoint settings for [`GatewayMode::Http`]. The API key itself is
/// never part of the config; only the name of the environment variable
/// holding it is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpSettings {
    pub base_url: String,
    pub model: String,
    pub embedding_model: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

fn default_api_key_env() -> String {
    "SSF_API_KEY".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewaySettings {
    #[serde(default)]
    pub mode: GatewayMode,
    #[serde(default = "default_embedding_dimension")]
    pub embedding_dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http: Option<HttpSettings>,
}

fn default_embedding_dimension() -> usize {
    16
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            mode: GatewayMode::Mock,
            embedding_dimension: default_embedding_dimension(),
            http: None,
        }
    }
}

/// Browsing-context and summary-length settings for the summarize
/// stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizeSettings {
    #[serde(default = "default_k_anc")]
    pub k_anc: usize,
    #[serde(default = "default_k_peer")]
    pub k_peer: usize,
    #[serde(default = "default_passthrough_max_chars")]
    pub passthrough_max_chars: usize,
}

fn default_k_anc() -> usize {
    3
}

fn default_k_peer() -> usize {
    2
}

fn default_passthrough_max_chars() -> usize {
    80
}

impl Default for SummarizeSettings {
    fn default() -> Self {
        SummarizeSettings {
            k_anc: default_k_anc(),
            k_peer: default_k_peer(),
            passthrough_max_chars: default_passthrough_max_chars(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSettings {
    #[serde(default = "default_inferences_per_dimension")]
    pub inferences_per_dimension: usize,
    #[serde(default = "default_retry_cap")]
    pub retry_cap: u32,
}

fn default_inferences_per_dimension() -> usize {
    1
}

fn default_retry_cap() -> u32 {
    2
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            inferences_per_dimension: default_inferences_per_dimension(),
            retry_cap: default_retry_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    /// Dimension pairs to cross-tabulate with NPMI.
    #[serde(default = "default_npmi_pairs")]
    pub npmi_pairs: Vec<(String, String)>,
    #[serde(default = "default_lambda_rank")]
    pub lambda_rank: f64,
    #[serde(default)]
    pub js_mode: JsMode,
}

fn default_npmi_pairs() -> Vec<(String, String)> {
    vec![("overall_goal".to_string(), "narrative_intent".to_string())]
}

fn default_lambda_rank() -> f64 {
    ssf_core::analytics::DEFAULT_LAMBDA_RANK
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            npmi_pairs: default_npmi_pairs(),
            lambda_rank: default_lambda_rank(),
            js_mode: JsMode::default(),
        }
    }
}

fn enabled() -> bool {
    true
}

/// Which stages a full `run` executes. Individual subcommands ignore
/// the toggles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageToggles {
    #[serde(default = "enabled")]
    pub ingest: bool,
    #[serde(default = "enabled")]
    pub curate: bool,
    #[serde(default = "enabled")]
    pub summarize: bool,
    #[serde(default = "enabled")]
    pub generate: bool,
    #[serde(default = "enabled")]
    pub classify: bool,
    #[serde(default = "enabled")]
    pub analyze: bool,
    #[serde(default = "enabled")]
    pub validate: bool,
    #[serde(default = "enabled")]
    pub report: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            ingest: true,
            curate: true,
            summarize: true,
            generate: true,
            classify: true,
            analyze: true,
            validate: true,
            report: true,
        }
    }
}

/// Description and rules for one community, used by the summarize
/// stage.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommunityMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<String>,
}

/// The whole run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Conversation corpus JSONL (one utterance per line).
    pub corpus: PathBuf,
    /// Score sidecar JSONL for candidate stories.
    pub scores: PathBuf,
    /// Community metadata JSON: name to description/rules.
    pub communities: PathBuf,
    /// Taxonomy registry JSON; the built-in registry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    /// Survey rating export CSV for the validate stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings: Option<PathBuf>,
    /// Gold label JSONL for the validate stage's agreement report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_labels: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Required whenever a sampling stage (curate) is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(default)]
    pub gateway: GatewaySettings,
    pub curation: CurationConfig,
    #[serde(default)]
    pub summarize: SummarizeSettings,
    #[serde(default)]
    pub generation: GenerationSettings,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default)]
    pub stages: StageToggles,
}

/// Command-line overrides applied on top of the config document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub gateway: Option<GatewayMode>,
}

impl RunConfig {
    /// Loads a config document, resolves its relative paths against
    /// the document's directory, and applies overrides.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("reading config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("parsing config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        if let Some(seed) = overrides.seed {
            config.rng_seed = Some(seed);
        }
        if let Some(out) = &overrides.out {
            config.out_dir = out.clone();
        }
        if let Some(mode) = overrides.gateway {
            config.gateway.mode = mode;
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.corpus);
        resolve(&mut self.scores);
        resolve(&mut self.communities);
        resolve(&mut self.out_dir);
        for optional in [&mut self.registry, &mut self.ratings, &mut self.gold_labels]
            .into_iter()
            .flatten()
        {
            resolve(optional);
        }
    }

    /// Checks path existence and cross-field requirements.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut required: Vec<(&str, &PathBuf)> = vec![
            ("corpus", &self.corpus),
            ("scores", &self.scores),
            ("communities", &self.communities),
        ];
        for (name, path) in [
            ("registry", &self.registry),
            ("ratings", &self.ratings),
            ("gold_labels", &self.gold_labels),
        ] {
            if let Some(path) = path {
                required.push((name, path));
            }
        }
        for (name, path) in required {
            if !path.exists() {
                return Err(CliError::Validation(format!(
                    "{name} path {} does not exist",
                    path.display()
                )));
            }
        }
        if self.stages.curate && self.rng_seed.is_none() {
            return Err(CliError::Validation(
                "rng_seed is required while the curate sampling stage is enabled".to_string(),
            ));
        }
        if self.gateway.mode == GatewayMode::Http && self.gateway.http.is_none() {
            return Err(CliError::Validation(
                "gateway.http settings are required for http mode".to_string(),
            ));
        }
        if self.gateway.embedding_dimension == 0 {
            return Err(CliError::Validation(
                "gateway.embedding_dimension must be positive".to_string(),
            ));
        }
        let mut curation = self.curation.clone();
        if let Some(seed) = self.rng_seed {
            curation.rng_seed = seed;
        }
        curation
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.analysis.lambda_rank) {
            return Err(CliError::Validation(format!(
                "analysis.lambda_rank must lie in [0, 1], got {}",
                self.analysis.lambda_rank
            )));
        }
        Ok(())
    }

    /// Curation settings with the run seed folded in.
    pub fn effective_curation(&self) -> CurationConfig {
        let mut curation = self.curation.clone();
        if let Some(seed) = self.rng_seed {
            curation.rng_seed = seed;
        }
        curation
    }

    /// Hash identifying this run's outputs. The output directory is
    /// excluded: where artifacts land does not change what they
    /// contain.
    pub fn content_hash(&self) -> Result<String, CliError> {
        let mut hashed = self.clone();
        hashed.out_dir = PathBuf::new();
        ssf_core::artifact::config_hash(&hashed)
            .map_err(|e| CliError::Validation(format!("hashing config: {e}")))
    }
}

/// Loads the community metadata document.
pub fn load_communities(path: &Path) -> Result<BTreeMap<String, CommunityMeta>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Validation(format!("reading communities {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Validation(format!("parsing communities {}: {e}", path.display()))
    })
}

//! Iterative context summarization and community summaries.
//!
//! A browsing-context window is distilled in stages: one summary per
//! context utterance, a global summary over the ancestral chain,
//! another over the preceding-peer chain, a one-sentence summary of
//! the initial post, and a final merge into the conversation summary.
//! Every stage is cached by (utterance id, prompt hash) so re-running
//! a corpus issues zero duplicate model calls. Backend failures leave
//! a partial result with the failed stages marked; nothing is ever
//! fabricated in place of a summary.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{prompt_hash, Gateway, GenerationRequest};
use crate::graph::ContextWindow;
use crate::prompt::{bindings, catalog, PromptTemplate};

/// Stage names used in provenance and failure records.
pub mod stage {
    pub const POST_SUMMARY: &str = "post_summary";
    pub const ANCESTORS: &str = "ancestral_chain_summary";
    pub const PEERS: &str = "peer_chain_summary";
    pub const INITIAL_POST: &str = "initial_post_summary";
    pub const CONVERSATION: &str = "conversation_summary";
    pub const COMMUNITY_PURPOSE: &str = "community_purpose";
    pub const COMMUNITY_VALUES: &str = "community_values";
}

/// Marker bound into the merge prompt for an absent chain.
pub const NONE_MARKER: &str = "(none)";

/// Backend tag recorded when a stage was served without a model call.
pub const PASSTHROUGH: &str = "passthrough";
/// Backend tag recorded when a stage was served from the cache.
pub const CACHED: &str = "cache";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummarizeConfig {
    /// Texts at most this many characters skip summarization and pass
    /// through verbatim; very short inputs tempt models into
    /// hallucinating content that is not there.
    pub passthrough_max_chars: usize,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        SummarizeConfig {
            passthrough_max_chars: 80,
        }
    }
}

/// One executed stage: what ran, on which prompt, answered by whom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub stage: String,
    /// Id of the utterance or community the stage concerned.
    pub subject: String,
    /// Empty for passthrough stages that sent no prompt.
    pub prompt_hash: String,
    pub backend: String,
}

/// A stage that could not produce its summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub subject: String,
    pub message: String,
}

/// Staged summaries for one utterance's browsing context. `None`
/// fields mean the stage was skipped (no input) or failed (check
/// `failures`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ContextSummary {
    pub initial_post_summary: Option<String>,
    pub ancestors_summary: Option<String>,
    pub peers_summary: Option<String>,
    pub conversation_summary: Option<String>,
    pub provenance: Vec<ProvenanceEntry>,
    pub failures: Vec<StageFailure>,
}

/// Community purpose and values summaries. `None` means the source
/// text needed for that summary was unavailable or the backend failed;
/// missing sources are never papered over with invented text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub community: String,
    pub purpose_summary: Option<String>,
    pub values_summary: Option<String>,
    pub provenance: Vec<ProvenanceEntry>,
    pub failures: Vec<StageFailure>,
}

#[derive(Debug, Error)]
pub enum SummarizeError {
    #[error("summary cache line {line}: {message}")]
    CacheParse { line: usize, message: String },
    #[error("writing summary cache: {0}")]
    CacheWrite(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheLine {
    id: String,
    prompt_hash: String,
    summary: String,
}

/// Content-addressed summary store keyed by (subject id, prompt hash).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SummaryCache {
    entries: BTreeMap<(String, String), String>,
}

impl SummaryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &str, prompt_hash: &str) -> Option<&String> {
        self.entries
            .get(&(id.to_string(), prompt_hash.to_string()))
    }

    pub fn insert(&mut self, id: String, prompt_hash: String, summary: String) {
        self.entries.insert((id, prompt_hash), summary);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, SummarizeError> {
        let mut cache = Self::new();
        for (index, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| SummarizeError::CacheParse {
                line: index + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CacheLine =
                serde_json::from_str(&line).map_err(|e| SummarizeError::CacheParse {
                    line: index + 1,
                    message: e.to_string(),
                })?;
            cache.insert(parsed.id, parsed.prompt_hash, parsed.summary);
        }
        Ok(cache)
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<(), SummarizeError> {
        for ((id, hash), summary) in &self.entries {
            let line = CacheLine {
                id: id.clone(),
                prompt_hash: hash.clone(),
                summary: summary.clone(),
            };
            serde_json::to_writer(&mut writer, &line)
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            writeln!(writer)?;
        }
        Ok(())
    }
}

/// Runs the summarization stage graph against a gateway.
pub struct Summarizer<'a> {
    gateway: &'a Gateway,
    config: SummarizeConfig,
}

/// Outcome of one stage attempt, recorded into provenance or failures.
enum StageOutcome {
    Text(String),
    Failed,
}

impl<'a> Summarizer<'a> {
    pub fn new(gateway: &'a Gateway, config: SummarizeConfig) -> Self {
        Summarizer { gateway, config }
    }

    /// Renders, caches, and executes one stage prompt.
    fn run_stage(
        &self,
        stage: &str,
        subject: &str,
        template: &PromptTemplate,
        stage_bindings: BTreeMap<String, String>,
        cache: &mut SummaryCache,
        provenance: &mut Vec<ProvenanceEntry>,
        failures: &mut Vec<StageFailure>,
    ) -> StageOutcome {
        let rendered = template
            .render(&stage_bindings)
            .expect("stage bindings cover every placeholder");
        debug_assert!(
            !rendered.text.contains("<<"),
            "unresolved placeholder in {stage} prompt"
        );
        let hash = prompt_hash(&rendered.text);
        if let Some(summary) = cache.get(subject, &hash) {
            let summary = summary.clone();
            provenance.push(ProvenanceEntry {
                stage: stage.to_string(),
                subject: subject.to_string(),
                prompt_hash: hash,
                backend: CACHED.to_string(),
            });
            return StageOutcome::Text(summary);
        }
        let request = GenerationRequest::new(rendered.text, format!("{stage}:{subject}"));
        match self.gateway.generate(&request) {
            Ok(generation) => {
                cache.insert(subject.to_string(), hash.clone(), generation.text.clone());
                provenance.push(ProvenanceEntry {
                    stage: stage.to_string(),
                    subject: subject.to_string(),
                    prompt_hash: hash,
                    backend: generation.backend,
                });
                StageOutcome::Text(generation.text)
            }
            Err(err) => {
                failures.push(StageFailure {
                    stage: stage.to_string(),
                    subject: subject.to_string(),
                    message: err.to_string(),
                });
                StageOutcome::Failed
            }
        }
    }

    /// Summary of one post or comment; texts at or under the
    /// passthrough threshold are used verbatim without a model call.
    fn post_summary(
        &self,
        id: &str,
        text: &str,
        cache: &mut SummaryCache,
        provenance: &mut Vec<ProvenanceEntry>,
        failures: &mut Vec<StageFailure>,
    ) -> Option<String> {
        if text.chars().count() <= self.config.passthrough_max_chars {
            provenance.push(ProvenanceEntry {
                stage: stage::POST_SUMMARY.to_string(),
                subject: id.to_string(),
                prompt_hash: String::new(),
                backend: PASSTHROUGH.to_string(),
            });
            return Some(text.to_string());
        }
        match self.run_stage(
            stage::POST_SUMMARY,
            id,
            &catalog::post_summary(),
            bindings([("TEXT", text)]),
            cache,
            provenance,
            failures,
        ) {
            StageOutcome::Text(summary) => Some(summary),
            StageOutcome::Failed => None,
        }
    }

    /// Global summary over a chain of local summaries, cached under
    /// the chain's last utterance so sibling windows viewing the same
    /// chain share one call. A single-entry chain passes through its
    /// only summary without a model call.
    fn chain_summary(
        &self,
        stage: &str,
        template: &PromptTemplate,
        chain: &[(String, String)],
        cache: &mut SummaryCache,
        provenance: &mut Vec<ProvenanceEntry>,
        failures: &mut Vec<StageFailure>,
    ) -> Option<String> {
        match chain {
            [] => None,
            [(id, only)] => {
                provenance.push(ProvenanceEntry {
                    stage: stage.to_string(),
                    subject: id.clone(),
                    prompt_hash: String::new(),
                    backend: PASSTHROUGH.to_string(),
                });
                Some(only.clone())
            }
            many => {
                let last_id = &many[many.len() - 1].0;
                let bullets: Vec<String> =
                    many.iter().map(|(_, s)| format!("- {s}")).collect();
                match self.run_stage(
                    stage,
                    last_id,
                    template,
                    bindings([
                        ("SUMMARY_COUNT", many.len().to_string().as_str()),
                        ("SUMMARIES", bullets.join("\n").as_str()),
                    ]),
                    cache,
                    provenance,
                    failures,
                ) {
                    StageOutcome::Text(summary) => Some(summary),
                    StageOutcome::Failed => None,
                }
            }
        }
    }

    /// Distills a browsing-context window into staged summaries.
    pub fn summarize_context(
        &self,
        window: &ContextWindow<'_>,
        cache: &mut SummaryCache,
    ) -> ContextSummary {
        let mut out = ContextSummary::default();
        // The merge stage is cached under the target utterance; chain
        // stages live with their chains and per-utterance summaries
        // with their utterances, so overlapping windows share entries.
        let subject = window.target.id.clone();

        // Stage 1: one summary per context utterance.
        let mut ancestor_chain = Vec::new();
        let mut ancestors_complete = true;
        for utterance in &window.ancestors {
            match self.post_summary(
                &utterance.id,
                &utterance.text,
                cache,
                &mut out.provenance,
                &mut out.failures,
            ) {
                Some(summary) => ancestor_chain.push((utterance.id.clone(), summary)),
                None => ancestors_complete = false,
            }
        }
        let mut peer_chain = Vec::new();
        let mut peers_complete = true;
        for utterance in &window.prior_peers {
            match self.post_summary(
                &utterance.id,
                &utterance.text,
                cache,
                &mut out.provenance,
                &mut out.failures,
            ) {
                Some(summary) => peer_chain.push((utterance.id.clone(), summary)),
                None => peers_complete = false,
            }
        }

        // Stage 2: chain summaries, only over complete inputs.
        if ancestors_complete {
            out.ancestors_summary = self.chain_summary(
                stage::ANCESTORS,
                &catalog::ancestral_chain_summary(),
                &ancestor_chain,
                cache,
                &mut out.provenance,
                &mut out.failures,
            );
        } else {
            out.failures.push(StageFailure {
                stage: stage::ANCESTORS.to_string(),
                subject: subject.clone(),
                message: "missing per-utterance summaries".to_string(),
            });
        }
        if peers_complete {
            out.peers_summary = self.chain_summary(
                stage::PEERS,
                &catalog::peer_chain_summary(),
                &peer_chain,
                cache,
                &mut out.provenance,
                &mut out.failures,
            );
        } else {
            out.failures.push(StageFailure {
                stage: stage::PEERS.to_string(),
                subject: subject.clone(),
                message: "missing per-utterance summaries".to_string(),
            });
        }

        // Stage 3: one-sentence summary of the initial post, built
        // from its title and its local summary.
        let initial = window.initial_post;
        let initial_local = if !window.ancestors.is_empty() {
            ancestor_chain.first().map(|(_, summary)| summary.clone())
        } else {
            self.post_summary(
                &initial.id,
                &initial.text,
                cache,
                &mut out.provenance,
                &mut out.failures,
            )
        };
        match initial_local {
            Some(local) => {
                let title = initial.title.as_deref().unwrap_or(NONE_MARKER);
                out.initial_post_summary = match self.run_stage(
                    stage::INITIAL_POST,
                    &initial.id,
                    &catalog::initial_post_summary(),
                    bindings([("TITLE", title), ("POST_SUMMARY", local.as_str())]),
                    cache,
                    &mut out.provenance,
                    &mut out.failures,
                ) {
                    StageOutcome::Text(summary) => Some(summary),
                    StageOutcome::Failed => None,
                };
            }
            None => {
                out.failures.push(StageFailure {
                    stage: stage::INITIAL_POST.to_string(),
                    subject: initial.id.clone(),
                    message: "missing initial post summary input".to_string(),
                });
            }
        }

        // Stage 4: merge. A window with no conversational context
        // reuses the initial post summary directly.
        if window.ancestors.is_empty() && window.prior_peers.is_empty() {
            match &out.initial_post_summary {
                Some(summary) => {
                    out.conversation_summary = Some(summary.clone());
                    out.provenance.push(ProvenanceEntry {
                        stage: stage::CONVERSATION.to_string(),
                        subject,
                        prompt_hash: String::new(),
                        backend: PASSTHROUGH.to_string(),
                    });
                }
                None => out.failures.push(StageFailure {
                    stage: stage::CONVERSATION.to_string(),
                    subject,
                    message: "missing initial post summary input".to_string(),
                }),
            }
            return out;
        }
        let ancestors_ok = ancestors_complete
            && (window.ancestors.is_empty() || out.ancestors_summary.is_some());
        let peers_ok =
            peers_complete && (window.prior_peers.is_empty() || out.peers_summary.is_some());
        if ancestors_ok && peers_ok {
            out.conversation_summary = match self.run_stage(
                stage::CONVERSATION,
                &subject,
                &catalog::conversation_summary(),
                bindings([
                    (
                        "ANCESTRAL_CHAIN_SUMMARY",
                        out.ancestors_summary.as_deref().unwrap_or(NONE_MARKER),
                    ),
                    (
                        "PRECEEDING_PEERS_SUMMARY",
                        out.peers_summary.as_deref().unwrap_or(NONE_MARKER),
                    ),
                ]),
                cache,
                &mut out.provenance,
                &mut out.failures,
            ) {
                StageOutcome::Text(summary) => Some(summary),
                StageOutcome::Failed => None,
            };
        } else {
            out.failures.push(StageFailure {
                stage: stage::CONVERSATION.to_string(),
                subject,
                message: "missing chain summary inputs".to_string(),
            });
        }
        out
    }

    /// Community purpose and values summaries from the community's
    /// public description and rules. Missing sources leave the
    /// corresponding field unavailable.
    pub fn summarize_community(
        &self,
        community: &str,
        description: Option<&str>,
        rules: Option<&str>,
        cache: &mut SummaryCache,
    ) -> CommunitySummary {
        let mut out = CommunitySummary {
            community: community.to_string(),
            purpose_summary: None,
            values_summary: None,
            provenance: Vec::new(),
            failures: Vec::new(),
        };
        let subject = format!("community:{community}");
        let Some(description) = description else {
            return out;
        };
        out.purpose_summary = match self.run_stage(
            stage::COMMUNITY_PURPOSE,
            &subject,
            &catalog::community_purpose(),
            bindings([
                ("SUBREDDIT_NAME", community),
                ("SUBREDDIT_PUBLIC_DESCRIPTION", description),
            ]),
            cache,
            &mut out.provenance,
            &mut out.failures,
        ) {
            StageOutcome::Text(summary) => Some(summary),
            StageOutcome::Failed => None,
        };
        let (Some(purpose), Some(rules)) = (&out.purpose_summary, rules) else {
            return out;
        };
        out.values_summary = match self.run_stage(
            stage::COMMUNITY_VALUES,
            &subject,
            &catalog::community_values(),
            bindings([
                ("SUBREDDIT_NAME", community),
                ("SUBREDDIT_DESCRIPTION_SUMMARY", purpose.as_str()),
                ("SUBREDDIT_PUBLIC_RULES", rules),
            ]),
            cache,
            &mut out.provenance,
            &mut out.failures,
        ) {
            StageOutcome::Text(summary) => Some(summary),
            StageOutcome::Failed => None,
        };
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{MockTextBackend, ScriptEntry};
    use crate::gateway::{Gateway, RetryPolicy, TextBackend};
    use crate::graph::{ConversationGraph, OrphanPolicy, RawUtterance};
    use std::io::Cursor;
    use std::time::Duration;

    fn raw(id: &str, parent: Option<&str>, timestamp: i64, text: &str) -> RawUtterance {
        RawUtterance {
            id: id.to_string(),
            conversation_id: "conv".to_string(),
            subreddit: "stories".to_string(),
            timestamp,
            text: text.to_string(),
            parent_id: parent.map(str::to_string),
            author_hash: Some("author".to_string()),
            title: if parent.is_none() {
                Some("A thing happened".to_string())
            } else {
                None
            },
        }
    }

    fn long_text(label: &str) -> String {
        format!("{label}: this account keeps going well past the passthrough threshold so that every stage issues a real model call instead of reusing the text verbatim.")
    }

    /// Root with a 5-deep reply chain and 5 earlier siblings under the
    /// last ancestor; the target sees 5 ancestors and 5 peers.
    fn deep_graph() -> ConversationGraph {
        let mut records = vec![raw("a0", None, 0, &long_text("root"))];
        for i in 1..5 {
            records.push(raw(
                &format!("a{i}"),
                Some(&format!("a{}", i - 1)),
                i as i64,
                &long_text(&format!("ancestor {i}")),
            ));
        }
        for i in 0..5 {
            records.push(raw(
                &format!("p{i}"),
                Some("a4"),
                10 + i as i64,
                &long_text(&format!("peer {i}")),
            ));
        }
        records.push(raw("target", Some("a4"), 20, &long_text("target")));
        ConversationGraph::build(&records, OrphanPolicy::Reject).unwrap()
    }

    fn mock_gateway(mock: &MockTextBackend) -> Gateway {
        Gateway::new(Box::new(mock.clone())).with_retry(RetryPolicy {
            max_retries: 0,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(1),
        })
    }

    #[test]
    fn root_only_window_reuses_initial_post_summary() {
        let graph = ConversationGraph::build(
            &[raw("a0", None, 0, &long_text("root"))],
            OrphanPolicy::Reject,
        )
        .unwrap();
        let window = graph.select_context("a0", 5, 5).unwrap();
        let mock = MockTextBackend::new();
        let gateway = mock_gateway(&mock);
        let summarizer = Summarizer::new(&gateway, SummarizeConfig::default());
        let mut cache = SummaryCache::new();
        let summary = summarizer.summarize_context(&window, &mut cache);

        assert!(summary.failures.is_empty());
        assert_eq!(summary.conversation_summary, summary.initial_post_summary);
        assert!(summary
            .initial_post_summary
            .as_deref()
            .unwrap()
            .starts_with("The first post"));
        assert!(summary.ancestors_summary.is_none());
        assert!(summary.peers_summary.is_none());
        // One call for the root's local summary, one for the initial
        // post distillation; the merge reuses it.
        assert_eq!(mock.call_count(), 2);
    }

    #[test]
    fn full_window_runs_the_documented_stage_graph() {
        let graph = deep_graph();
        let window = graph.select_context("target", 5, 5).unwrap();
        assert_eq!(window.ancestors.len(), 5);
        assert_eq!(window.prior_peers.len(), 5);

        let mock = MockTextBackend::new();
        let gateway = mock_gateway(&mock);
        let summarizer = Summarizer::new(&gateway, SummarizeConfig::default());
        let mut cache = SummaryCache::new();
        let summary = summarizer.summarize_context(&window, &mut cache);

        assert!(summary.failures.is_empty(), "{:?}", summary.failures);
        // 10 per-utterance summaries + 2 chain summaries + the initial
        // post distillation + the merge.
        assert_eq!(mock.call_count(), 14);
        assert!(summary
            .conversation_summary
            .as_deref()
            .unwrap()
            .starts_with("The conversation so far"));
        assert!(summary
            .initial_post_summary
            .as_deref()
            .unwrap()
            .starts_with("The first post"));
        assert!(summary.ancestors_summary.is_some());
        assert!(summary.peers_summary.is_some());

        // Re-running the same window is free: every stage hits cache.
        let again = summarizer.summarize_context(&window, &mut cache);
        assert_eq!(mock.call_count(), 14);
        assert_eq!(again.conversation_summary, summary.conversation_summary);
        assert!(again
            .provenance
            .iter()
            .all(|p| p.backend == CACHED || p.backend == PASSTHROUGH));
    }

    #[test]
    fn sibling_windows_share_cached_ancestor_summaries() {
        let graph = deep_graph();
        let mock = MockTextBackend::new();
        let gateway = mock_gateway(&mock);
        let summarizer = Summarizer::new(&gateway, SummarizeConfig::default());
        let mut cache = SummaryCache::new();

        let target = graph.select_context("target", 5, 5).unwrap();
        summarizer.summarize_context(&target, &mut cache);
        let calls_after_first = mock.call_count();

        // p4 shares all five ancestors (and so the whole ancestral
        // chain) and four peers with the target; its initial post
        // distillation is cached under the root. Only its own peer
        // chain and merge prompts are new.
        let sibling = graph.select_context("p4", 5, 5).unwrap();
        summarizer.summarize_context(&sibling, &mut cache);
        let new_calls = mock.call_count() - calls_after_first;
        assert_eq!(
            new_calls, 2,
            "expected only peer-chain and merge calls, got {new_calls}"
        );
    }

    #[test]
    fn short_texts_pass_through_verbatim() {
        let graph = ConversationGraph::build(
            &[raw("a0", None, 0, "Short story.")],
            OrphanPolicy::Reject,
        )
        .unwrap();
        let window = graph.select_context("a0", 5, 5).unwrap();
        let mock = MockTextBackend::new();
        let gateway = mock_gateway(&mock);
        let summarizer = Summarizer::new(&gateway, SummarizeConfig::default());
        let mut cache = SummaryCache::new();
        let summary = summarizer.summarize_context(&window, &mut cache);

        // Only the initial post distillation hits the backend.
        assert_eq!(mock.call_count(), 1);
        let passthrough = summary
            .provenance
            .iter()
            .find(|p| p.stage == stage::POST_SUMMARY)
            .unwrap();
        assert_eq!(passthrough.backend, PASSTHROUGH);
        assert_eq!(passthrough.prompt_hash, "");
        assert!(summary.conversation_summary.is_some());
    }

    #[test]
    fn single_ancestor_chain_passes_through() {
        let records = vec![
            raw("a0", None, 0, &long_text("root")),
            raw("r1", Some("a0"), 1, &long_text("reply")),
        ];
        let graph = ConversationGraph::build(&records, OrphanPolicy::Reject).unwrap();
        let window = graph.select_context("r1", 5, 5).unwrap();
        let mock = MockTextBackend::new();
        let gateway = mock_gateway(&mock);
        let summarizer = Summarizer::new(&gateway, SummarizeConfig::default());
        let mut cache = SummaryCache::new();
        let summary = summarizer.summarize_context(&window, &mut cache);

        assert!(summary.failures.is_empty());
        // Root post summary + initial distillation + merge; the
        // one-entry ancestor chain reuses the root's summary.
        assert_eq!(mock.call_count(), 3);
        let chain = summary
            .provenance
            .iter()
            .find(|p| p.stage == stage::ANCESTORS)
            .unwrap();
        assert_eq!(chain.backend, PASSTHROUGH);
    }

    /// Captures every prompt the summarizer sends.
    struct Recorder {
        inner: MockTextBackend,
        prompts: std::sync::Arc<std::sync::Mutex<Vec<String>>>,
    }

    impl TextBackend for Recorder {
        fn generate(
            &self,
            request: &GenerationRequest,
        ) -> Result<crate::gateway::Generation, crate::gateway::GatewayError> {
            self.prompts.lock().unwrap().push(request.prompt.clone());
            self.inner.generate(request)
        }
        fn name(&self) -> &str {
            "recorder"
        }
    }

    #[test]
    fn no_prompt_carries_unresolved_placeholders() {
        let prompts = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let gateway = Gateway::new(Box::new(Recorder {
            inner: MockTextBackend::new(),
            prompts: prompts.clone(),
        }));
        let graph = deep_graph();
        let window = graph.select_context("target", 5, 5).unwrap();
        let summarizer = Summarizer::new(&gateway, SummarizeConfig::default());
        let mut cache = SummaryCache::new();
        let summary = summarizer.summarize_context(&window, &mut cache);
        assert!(summary.failures.is_empty());

        let sent = prompts.lock().unwrap();
        assert_eq!(sent.len(), 14);
        for prompt in sent.iter() {
            assert!(!prompt.contains("<<"), "unresolved placeholder in:\n{prompt}");
        }
        // The merge prompt names the absent-peer marker only when a
        // chain is missing; here both chains exist.
        let merge = sent
            .iter()
            .find(|p| p.contains("The conversation so far"))
            .unwrap();
        assert!(!merge.contains(NONE_MARKER));
    }

    #[test]
    fn merge_prompt_marks_missing_peer_chain() {
        let prompts = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let gateway = Gateway::new(Box::new(Recorder {
            inner: MockTextBackend::new(),
            prompts: prompts.clone(),
        }));
        let records = vec![
            raw("a0", None, 0, &long_text("root")),
            raw("r1", Some("a0"), 1, &long_text("reply")),
        ];
        let graph = ConversationGraph::build(&records, OrphanPolicy::Reject).unwrap();
        let window = graph.select_context("r1", 5, 5).unwrap();
        let summarizer = Summarizer::new(&gateway, SummarizeConfig::default());
        let mut cache = SummaryCache::new();
        summarizer.summarize_context(&window, &mut cache);

        let sent = prompts.lock().unwrap();
        let merge = sent
            .iter()
            .find(|p| p.contains("Preceding Peers Summary:\n(none)"))
            .expect("merge prompt marks the absent peer chain");
        assert!(merge.contains("Start your response with 'The conversation so far...'"));
    }

    #[test]
    fn backend_failure_yields_partial_result_with_marked_stages() {
        let story = long_text("root");
        let graph = ConversationGraph::build(
            &[raw("a0", None, 0, &story)],
            OrphanPolicy::Reject,
        )
        .unwrap();
        let window = graph.select_context("a0", 5, 5).unwrap();

        // Script the root's local summary; leave the initial post
        // distillation to fail permanently.
        let mock = MockTextBackend::strict();
        let post_prompt = catalog::post_summary()
            .render(&bindings([("TEXT", story.as_str())]))
            .unwrap()
            .text;
        mock.script(&post_prompt, "The root post, condensed.");
        let initial_prompt = catalog::initial_post_summary()
            .render(&bindings([
                ("TITLE", "A thing happened"),
                ("POST_SUMMARY", "The root post, condensed."),
            ]))
            .unwrap()
            .text;
        mock.script_entries(
            &initial_prompt,
            vec![ScriptEntry::Permanent("nope".to_string())],
        );

        let gateway = mock_gateway(&mock);
        let summarizer = Summarizer::new(&gateway, SummarizeConfig::default());
        let mut cache = SummaryCache::new();
        let summary = summarizer.summarize_context(&window, &mut cache);

        assert!(summary.initial_post_summary.is_none());
        assert!(summary.conversation_summary.is_none());
        let failed_stages: Vec<&str> =
            summary.failures.iter().map(|f| f.stage.as_str()).collect();
        assert!(failed_stages.contains(&stage::INITIAL_POST));
        assert!(failed_stages.contains(&stage::CONVERSATION));
    }

    #[test]
    fn community_summaries_require_their_sources() {
        let mock = MockTextBackend::new();
        let gateway = mock_gateway(&mock);
        let summarizer = Summarizer::new(&gateway, SummarizeConfig::default());
        let mut cache = SummaryCache::new();

        let full = summarizer.summarize_community(
            "stories",
            Some("A place to share personal stories."),
            Some("1. Be kind.\n2. No spam."),
            &mut cache,
        );
        assert!(full.purpose_summary.is_some());
        assert!(full.values_summary.is_some());
        assert!(full.failures.is_empty());

        let no_rules = summarizer.summarize_community(
            "stories",
            Some("A place to share personal stories."),
            None,
            &mut cache,
        );
        assert!(no_rules.purpose_summary.is_some());
        assert!(no_rules.values_summary.is_none());

        let nothing = summarizer.summarize_community("stories", None, None, &mut cache);
        assert!(nothing.purpose_summary.is_none());
        assert!(nothing.values_summary.is_none());
        assert!(nothing.provenance.is_empty());

        // Byte-stable on re-run via cache.
        let again = summarizer.summarize_community(
            "stories",
            Some("A place to share personal stories."),
            Some("1. Be kind.\n2. No spam."),
            &mut cache,
        );
        assert_eq!(again.purpose_summary, full.purpose_summary);
        assert_eq!(again.values_summary, full.values_summary);
    }

    #[test]
    fn cache_round_trips_through_jsonl() {
        let mut cache = SummaryCache::new();
        cache.insert("u1".to_string(), "hash1".to_string(), "summary one".to_string());
        cache.insert("u2".to_string(), "hash2".to_string(), "summary two".to_string());
        let mut buffer = Vec::new();
        cache.write_jsonl(&mut buffer).unwrap();
        let restored = SummaryCache::read_jsonl(Cursor::new(&buffer)).unwrap();
        assert_eq!(cache, restored);

        let mut twice = Vec::new();
        restored.write_jsonl(&mut twice).unwrap();
        assert_eq!(buffer, twice);
    }

    #[test]
    fn cache_rejects_malformed_lines() {
        let err = SummaryCache::read_jsonl(Cursor::new("junk\n")).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}

//! Templated inference generation, conformance checking, demonstration
//! sampling, and multi-label classification.
//!
//! An inference is one filled perspective template: the dimension's fixed
//! wording with every `{{slot}}` replaced by model-written text. The
//! generation prompt forbids edits outside the braces, so conformance
//! checking either recovers the slot fills exactly or reports how the
//! fixed text was broken. Classification maps a filled sentence onto the
//! dimension's sublabel vocabulary, optionally guided by demonstrations
//! sampled from a labeled pool with a mix of random, maximal-marginal-
//! relevance, and nearest-neighbor picks.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{cosine_similarity, Gateway, GatewayError, GenerationRequest};
use crate::prompt::{self, catalog, PromptTemplate};
use crate::taxonomy::{Dimension, SlotTemplate, TaxonomyError, TaxonomyRegistry};

/// At most this many independent inferences per (story, dimension).
pub const MAX_INFERENCES_PER_DIMENSION: usize = 3;

/// Relevance/diversity balance used when a pool does not set its own.
pub const DEFAULT_LAMBDA_MMR: f64 = 0.5;

/// Whether an inference was requested as a plausible reading or as a
/// deliberately implausible attention check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    KnownImplausible,
}

/// One filled perspective template for a story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inference {
    pub story_id: String,
    /// Dimension id in the taxonomy registry.
    pub dimension: String,
    /// Slot name to fill text, covering every slot exactly once.
    pub slot_values: BTreeMap<String, String>,
    /// The dimension template with `slot_values` substituted.
    pub rendered_text: String,
    pub variant: Variant,
    /// Backend tag of the gateway that produced the fills.
    pub origin: String,
}

/// Who assigned a set of labels to an inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Model,
    Human,
}

/// Sublabels assigned to one inference. An empty set is a valid outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub story_id: String,
    pub dimension: String,
    /// The classified sentence, identifying the inference it labels.
    pub rendered_text: String,
    pub labels: BTreeSet<String>,
    pub source: LabelSource,
}

/// Conversational and community context bound into generation prompts.
///
/// Fields that are unavailable for a story should carry the literal
/// marker `"(none)"` rather than an empty string so prompts stay
/// readable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoryContext {
    pub community_name: String,
    pub community_description: String,
    pub community_values: String,
    pub initial_post_summary: String,
    pub conversation_summary: String,
    pub current_text: String,
}

impl StoryContext {
    /// Context with every part except the community name and the text
    /// under analysis marked absent.
    pub fn degenerate(community_name: impl Into<String>, current_text: impl Into<String>) -> Self {
        StoryContext {
            community_name: community_name.into(),
            community_description: "(none)".to_string(),
            community_values: "(none)".to_string(),
            initial_post_summary: "(none)".to_string(),
            conversation_summary: "(none)".to_string(),
            current_text: current_text.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error(
        "requested {n} inferences; at most {MAX_INFERENCES_PER_DIMENSION} \
         are allowed per story and dimension"
    )]
    TooManyInferences { n: usize },
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("no JSON object with a \"response\" field after {attempts} attempt(s); last raw output: {raw:?}")]
    UnparseableResponse { attempts: u32, raw: String },
    #[error("output broke the template after {attempts} attempt(s): {report}; last raw output: {raw:?}")]
    Nonconforming {
        attempts: u32,
        report: String,
        raw: String,
    },
    #[error(
        "labels {labels:?} are not in dimension {dimension:?} after {attempts} attempt(s)"
    )]
    InvalidLabels {
        attempts: u32,
        dimension: String,
        labels: Vec<String>,
    },
    #[error("demo pool holds {pool} candidates but {k} were requested")]
    PoolTooSmall { pool: usize, k: usize },
    #[error("demo embedding at index {index} has norm {norm} instead of 1")]
    UnnormalizedEmbedding { index: usize, norm: f64 },
    #[error("demo embedding at index {index} has {found} components; expected {expected}")]
    MismatchedEmbedding {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("query embedding has {query} components; the pool has {pool}")]
    MismatchedQuery { query: usize, pool: usize },
    #[error("lambda_mmr must lie in [0, 1]; got {0}")]
    BadLambda(f64),
}

// ---------------------------------------------------------------------------
// Conformance
// ---------------------------------------------------------------------------

/// Outcome of matching a candidate text against a slot template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Conformance {
    Conforming {
        slot_values: BTreeMap<String, String>,
        /// True when more than one segmentation matches; the reported
        /// fills are then the leftmost-shortest choice.
        ambiguous: bool,
    },
    Violation { report: String },
}

impl Conformance {
    pub fn is_conforming(&self) -> bool {
        matches!(self, Conformance::Conforming { .. })
    }
}

/// Matches `candidate` against the template's fixed segments in order,
/// with arbitrary non-empty text in every slot position.
///
/// When a fixed segment also occurs inside a fill, several segmentations
/// can match; the leftmost-shortest one is returned and flagged.
pub fn check_conformance(template: &SlotTemplate, candidate: &str) -> Conformance {
    let fixed = template.fixed_segments();
    let slots: Vec<&str> = template.slot_names().collect();
    let m = slots.len();
    debug_assert_eq!(fixed.len(), m + 1);

    let prefix = fixed[0];
    let suffix = fixed[m];
    if !candidate.starts_with(prefix) {
        return Conformance::Violation {
            report: format!("text does not start with the fixed prefix {prefix:?}"),
        };
    }
    if candidate.len() < prefix.len() + suffix.len() {
        return Conformance::Violation {
            report: "text is shorter than the template's fixed parts; a slot fill would be empty"
                .to_string(),
        };
    }
    if !candidate.ends_with(suffix) {
        return Conformance::Violation {
            report: format!("text does not end with the fixed suffix {suffix:?}"),
        };
    }
    let start = prefix.len();
    let end = candidate.len() - suffix.len();

    let mut memo = BTreeMap::new();
    let total = count_segmentations(candidate, &fixed, 1, start, end, &mut memo);
    if total == 0 {
        return Conformance::Violation {
            report: diagnose_mismatch(candidate, &fixed, start, end),
        };
    }

    let mut slot_values = BTreeMap::new();
    let mut pos = start;
    for (index, name) in slots.iter().enumerate().take(m - 1) {
        let segment = fixed[index + 1];
        let chosen = occurrences_within(candidate, segment, pos + 1, end)
            .into_iter()
            .find(|&q| {
                count_segmentations(candidate, &fixed, index + 2, q + segment.len(), end, &mut memo)
                    >= 1
            })
            .expect("a completable occurrence exists whenever the total count is positive");
        slot_values.insert((*name).to_string(), candidate[pos..chosen].to_string());
        pos = chosen + segment.len();
    }
    slot_values.insert(slots[m - 1].to_string(), candidate[pos..end].to_string());

    debug_assert_eq!(
        template.render(&slot_values).as_deref().ok(),
        Some(candidate)
    );
    Conformance::Conforming {
        slot_values,
        ambiguous: total >= 2,
    }
}

/// Counts segmentations matching `fixed[i..]` from byte `pos`, capped at
/// 2 since callers only distinguish zero, one, and several.
fn count_segmentations(
    candidate: &str,
    fixed: &[&str],
    i: usize,
    pos: usize,
    end: usize,
    memo: &mut BTreeMap<(usize, usize), u32>,
) -> u32 {
    let m = fixed.len() - 1;
    if i == m {
        return u32::from(pos < end);
    }
    if let Some(&cached) = memo.get(&(i, pos)) {
        return cached;
    }
    let mut total = 0u32;
    for q in occurrences_within(candidate, fixed[i], pos + 1, end) {
        total += count_segmentations(candidate, fixed, i + 1, q + fixed[i].len(), end, memo);
        if total >= 2 {
            total = 2;
            break;
        }
    }
    memo.insert((i, pos), total);
    total
}

/// Byte offsets in `[from, to]` where `needle` occurs entirely inside
/// `text[..to]`, at or after `from`. An empty needle matches every char
/// boundary in the range.
fn occurrences_within(text: &str, needle: &str, from: usize, to: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut start = next_boundary(text, from);
    if needle.is_empty() {
        let mut q = start;
        loop {
            if q > to {
                break;
            }
            out.push(q);
            if q >= text.len() {
                break;
            }
            q = next_boundary(text, q + 1);
        }
        return out;
    }
    while start < to && start + needle.len() <= to {
        match text[start..to].find(needle) {
            None => break,
            Some(rel) => {
                let q = start + rel;
                out.push(q);
                start = next_boundary(text, q + 1);
            }
        }
    }
    out
}

fn next_boundary(text: &str, mut pos: usize) -> usize {
    while pos < text.len() && !text.is_char_boundary(pos) {
        pos += 1;
    }
    pos.min(text.len())
}

/// Best-effort description of why no segmentation matched, based on a
/// greedy left-to-right walk.
fn diagnose_mismatch(candidate: &str, fixed: &[&str], start: usize, end: usize) -> String {
    let m = fixed.len() - 1;
    if m == 1 {
        return "the slot between the fixed prefix and suffix is empty".to_string();
    }
    let mut pos = start;
    for segment in fixed.iter().take(m).skip(1) {
        let occurrences = occurrences_within(candidate, segment, pos + 1, end);
        match occurrences.first() {
            None => {
                return format!(
                    "fixed segment {segment:?} not found with a non-empty fill before it"
                );
            }
            Some(&q) => pos = q + segment.len(),
        }
    }
    "a slot fill is empty".to_string()
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Generates up to `n` independent inferences for one (story, dimension)
/// pair. Each element is the outcome of one inference: outputs that stay
/// unparseable or break the template through every retry are returned as
/// errors carrying the raw model text, never repaired.
pub fn generate_inferences(
    story_id: &str,
    context: &StoryContext,
    dimension: &Dimension,
    gateway: &Gateway,
    n: usize,
    retry_cap: u32,
) -> Result<Vec<Result<Inference, FrameError>>, FrameError> {
    if n > MAX_INFERENCES_PER_DIMENSION {
        return Err(FrameError::TooManyInferences { n });
    }
    let template = dimension.parsed_template()?;
    let prompt = render_generation_prompt(&catalog::inference_generation(), context, dimension);
    let mut outcomes = Vec::with_capacity(n);
    for index in 0..n {
        outcomes.push(generate_one(
            &prompt,
            &template,
            dimension,
            gateway,
            story_id,
            index,
            Variant::Standard,
            retry_cap,
        ));
    }
    Ok(outcomes)
}

/// Generates one deliberately implausible inference under the same
/// template rules, marked so downstream exports can use it as an
/// attention check.
pub fn generate_known_implausible(
    story_id: &str,
    context: &StoryContext,
    dimension: &Dimension,
    gateway: &Gateway,
    retry_cap: u32,
) -> Result<Inference, FrameError> {
    let template = dimension.parsed_template()?;
    let prompt = render_generation_prompt(
        &catalog::inference_generation_implausible(),
        context,
        dimension,
    );
    generate_one(
        &prompt,
        &template,
        dimension,
        gateway,
        story_id,
        0,
        Variant::KnownImplausible,
        retry_cap,
    )
}

enum AttemptFailure {
    BadJson,
    Nonconforming(String),
}

#[allow(clippy::too_many_arguments)]
fn generate_one(
    prompt: &str,
    template: &SlotTemplate,
    dimension: &Dimension,
    gateway: &Gateway,
    story_id: &str,
    index: usize,
    variant: Variant,
    retry_cap: u32,
) -> Result<Inference, FrameError> {
    let kind = match variant {
        Variant::Standard => "gen",
        Variant::KnownImplausible => "implausible",
    };
    let attempts = retry_cap.saturating_add(1);
    let mut last: Option<(String, AttemptFailure)> = None;
    for attempt in 0..attempts {
        let tag = format!("{kind}:{story_id}:{}:{index}:a{attempt}", dimension.id);
        let generation = gateway.generate(&GenerationRequest::new(prompt, tag))?;
        let Some(candidate) = extract_response_string(&generation.text) else {
            last = Some((generation.text, AttemptFailure::BadJson));
            continue;
        };
        match check_conformance(template, &candidate) {
            Conformance::Conforming { slot_values, .. } => {
                return Ok(Inference {
                    story_id: story_id.to_string(),
                    dimension: dimension.id.clone(),
                    slot_values,
                    rendered_text: candidate,
                    variant,
                    origin: generation.backend,
                });
            }
            Conformance::Violation { report } => {
                last = Some((generation.text, AttemptFailure::Nonconforming(report)));
            }
        }
    }
    let (raw, failure) = last.expect("at least one attempt always runs");
    Err(match failure {
        AttemptFailure::BadJson => FrameError::UnparseableResponse { attempts, raw },
        AttemptFailure::Nonconforming(report) => FrameError::Nonconforming {
            attempts,
            report,
            raw,
        },
    })
}

fn render_generation_prompt(
    template: &PromptTemplate,
    context: &StoryContext,
    dimension: &Dimension,
) -> String {
    let template_json =
        serde_json::to_string(&dimension.template).expect("a string always serializes");
    let bindings = prompt::bindings([
        ("TAXONOMY_DIMENSION", dimension.display_name.as_str()),
        ("DIMENSION", dimension.display_name.as_str()),
        ("DIM", dimension.display_name.as_str()),
        ("DIMENSION_OVERVIEW", dimension.description.as_str()),
        ("SUBREDDIT_NAME", context.community_name.as_str()),
        ("SUBREDDIT_DESCRIPTION", context.community_description.as_str()),
        ("SUBREDDIT_VALUES", context.community_values.as_str()),
        ("INITIAL_POST_SUMMARY", context.initial_post_summary.as_str()),
        ("CONVERSATION_SUMMARY", context.conversation_summary.as_str()),
        ("CURRENT_TEXT", context.current_text.as_str()),
        ("DIMENSION_TEMPLATE", template_json.as_str()),
    ]);
    template
        .render(&bindings)
        .expect("every generation placeholder is bound")
        .text
}

/// Parses `{"response": "..."}` out of a raw model reply, tolerating
/// text before the first `{` and after the last `}`.
fn extract_response_string(raw: &str) -> Option<String> {
    #[derive(Deserialize)]
    struct Wrapper {
        response: String,
    }
    let body = raw.get(raw.find('{')?..=raw.rfind('}')?)?;
    serde_json::from_str::<Wrapper>(body)
        .ok()
        .map(|w| w.response)
}

/// Parses `{"response": ["a", "b"]}` out of a raw model reply.
fn extract_response_labels(raw: &str) -> Option<Vec<String>> {
    #[derive(Deserialize)]
    struct Wrapper {
        response: Vec<String>,
    }
    let body = raw.get(raw.find('{')?..=raw.rfind('}')?)?;
    serde_json::from_str::<Wrapper>(body)
        .ok()
        .map(|w| w.response)
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Classifies one inference into the dimension's sublabels. With an
/// empty `demos` slice the prompt carries no examples section; otherwise
/// the demonstrations appear in pool order. Replies naming labels
/// outside the dimension are rejected, retried, and finally surfaced as
/// errors rather than silently dropped.
pub fn classify_inference(
    inference: &Inference,
    registry: &TaxonomyRegistry,
    gateway: &Gateway,
    demos: &[Demo],
    retry_cap: u32,
) -> Result<LabelAssignment, FrameError> {
    let dimension = registry.dimension(&inference.dimension)?;
    let prompt = render_classification_prompt(dimension, &inference.rendered_text, demos);
    let attempts = retry_cap.saturating_add(1);
    let mut last: Option<Result<Vec<String>, String>> = None;
    for attempt in 0..attempts {
        let tag = format!("classify:{}:{}:a{attempt}", inference.story_id, dimension.id);
        let generation = gateway.generate(&GenerationRequest::new(&prompt, tag))?;
        let Some(labels) = extract_response_labels(&generation.text) else {
            last = Some(Err(generation.text));
            continue;
        };
        match registry.validate_labels(&dimension.id, &labels) {
            Ok(()) => {
                return Ok(LabelAssignment {
                    story_id: inference.story_id.clone(),
                    dimension: dimension.id.clone(),
                    rendered_text: inference.rendered_text.clone(),
                    labels: labels.into_iter().collect(),
                    source: LabelSource::Model,
                });
            }
            Err(TaxonomyError::UnknownLabels { labels: unknown, .. }) => {
                last = Some(Ok(unknown));
            }
            Err(other) => return Err(other.into()),
        }
    }
    Err(
        match last.expect("at least one attempt always runs") {
            Ok(labels) => FrameError::InvalidLabels {
                attempts,
                dimension: dimension.id.clone(),
                labels,
            },
            Err(raw) => FrameError::UnparseableResponse { attempts, raw },
        },
    )
}

fn render_classification_prompt(dimension: &Dimension, text: &str, demos: &[Demo]) -> String {
    let entries: Vec<String> = dimension
        .sublabels
        .iter()
        .map(|s| format!("- {}: {}", s.id, s.definition))
        .collect();
    let entries = entries.join("\n");
    let guidelines = dimension.guidelines.clone().unwrap_or_else(|| "(none)".to_string());
    let mut bindings = prompt::bindings([
        ("DIMENSION", dimension.display_name.as_str()),
        ("TAXONOMY_ENTRIES", entries.as_str()),
        ("DIMENSION_ANNOTATION_GUIDELINES", guidelines.as_str()),
        ("TEXT_TO_CLASSIFY", text),
    ]);
    let template = if demos.is_empty() {
        catalog::inference_classification_zero_shot()
    } else {
        bindings.insert("EXAMPLES".to_string(), format_examples(demos));
        catalog::inference_classification()
    };
    template
        .render(&bindings)
        .expect("every classification placeholder is bound")
        .text
}

fn format_examples(demos: &[Demo]) -> String {
    let blocks: Vec<String> = demos
        .iter()
        .map(|demo| {
            let labels: Vec<&str> = demo.labels.iter().map(String::as_str).collect();
            let json = serde_json::to_string(&labels).expect("a string list always serializes");
            format!("Input: {}\nOutput: {{\"response\": {json}}}", demo.text)
        })
        .collect();
    blocks.join("\n\n")
}

// ---------------------------------------------------------------------------
// Demonstration sampling
// ---------------------------------------------------------------------------

/// One labeled candidate demonstration with its text embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub text: String,
    pub labels: BTreeSet<String>,
    pub embedding: Vec<f64>,
}

/// Candidate demonstrations for one dimension with its sampling
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoPool {
    pub dimension: String,
    pub demos: Vec<Demo>,
    /// How many demonstrations to sample by default.
    pub k: usize,
    /// Relevance/diversity balance in [0, 1]; 1 is pure relevance.
    pub lambda_mmr: f64,
}

impl DemoPool {
    /// Validates embeddings (unit norm, consistent dimension), the
    /// sample size, and the relevance weight.
    pub fn new(
        dimension: impl Into<String>,
        demos: Vec<Demo>,
        k: usize,
        lambda_mmr: f64,
    ) -> Result<Self, FrameError> {
        if !lambda_mmr.is_finite() || !(0.0..=1.0).contains(&lambda_mmr) {
            return Err(FrameError::BadLambda(lambda_mmr));
        }
        if k > demos.len() {
            return Err(FrameError::PoolTooSmall {
                pool: demos.len(),
                k,
            });
        }
        let expected = demos.first().map_or(0, |d| d.embedding.len());
        for (index, demo) in demos.iter().enumerate() {
            if demo.embedding.len() != expected {
                return Err(FrameError::MismatchedEmbedding {
                    index,
                    expected,
                    found: demo.embedding.len(),
                });
            }
            let norm = demo.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
                return Err(FrameError::UnnormalizedEmbedding { index, norm });
            }
        }
        Ok(DemoPool {
            dimension: dimension.into(),
            demos,
            k,
            lambda_mmr,
        })
    }

    /// Samples `self.k` demonstrations for a query embedding.
    pub fn sample(&self, query: &[f64], seed: u64) -> Result<Vec<usize>, FrameError> {
        sample_demos(self, query, self.k, seed)
    }
}

/// Default sample size per dimension, tuned to label-set size and
/// classification difficulty.
pub fn default_demo_count(dimension_id: &str) -> Option<usize> {
    Some(match dimension_id {
        "overall_goal" | "narrative_intent" | "causal_explanation" | "moral" => 30,
        "author_emotional_response" | "narrative_feeling" => 20,
        "prediction" | "aesthetic_feeling" => 15,
        "character_appraisal" | "stance" => 10,
        _ => return None,
    })
}

/// Samples `k` distinct demonstrations in selection order: the first k/4
/// uniformly at random without replacement, the next tranche greedily by
/// maximal marginal relevance (cosine relevance to the query minus the
/// worst-case similarity to everything already selected, weighted by
/// `lambda_mmr`), and the final k/4 by pure cosine similarity among the
/// rest. Integer tranche sizes round down, with the remainder going to
/// the middle tranche. Returns indices into `pool.demos`.
pub fn sample_demos(
    pool: &DemoPool,
    query: &[f64],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, FrameError> {
    let n = pool.demos.len();
    if k > n {
        return Err(FrameError::PoolTooSmall { pool: n, k });
    }
    if let Some(first) = pool.demos.first() {
        if query.len() != first.embedding.len() {
            return Err(FrameError::MismatchedQuery {
                query: query.len(),
                pool: first.embedding.len(),
            });
        }
    }
    let lambda = pool.lambda_mmr;
    let n_rand = k / 4;
    let n_sim = k / 4;
    let n_mmr = k - n_rand - n_sim;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut selected: Vec<usize> = order.into_iter().take(n_rand).collect();

    let relevance: Vec<f64> = pool
        .demos
        .iter()
        .map(|d| cosine_similarity(&d.embedding, query))
        .collect();
    let mut remaining: Vec<usize> = (0..n).filter(|i| !selected.contains(i)).collect();
    let mut worst_case: Vec<f64> = remaining
        .iter()
        .map(|&i| max_similarity_to(pool, i, &selected))
        .collect();

    for _ in 0..n_mmr {
        let mut best: Option<(usize, f64)> = None;
        for (position, &candidate) in remaining.iter().enumerate() {
            let penalty = if worst_case[position].is_finite() {
                worst_case[position]
            } else {
                0.0
            };
            let score = lambda * relevance[candidate] - (1.0 - lambda) * penalty;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((position, score));
            }
        }
        let (position, _) = best.expect("k <= n leaves candidates for every pick");
        let picked = remaining.remove(position);
        worst_case.remove(position);
        for (position, &candidate) in remaining.iter().enumerate() {
            let sim = cosine_similarity(
                &pool.demos[candidate].embedding,
                &pool.demos[picked].embedding,
            );
            if sim > worst_case[position] {
                worst_case[position] = sim;
            }
        }
        selected.push(picked);
    }

    remaining.sort_by(|&a, &b| {
        relevance[b]
            .partial_cmp(&relevance[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    selected.extend(remaining.into_iter().take(n_sim));

    debug_assert_eq!(selected.len(), k);
    debug_assert_eq!(selected.iter().collect::<BTreeSet<_>>().len(), k);
    Ok(selected)
}

/// Highest cosine similarity from `candidate` to any selected demo.
/// Negative infinity marks an empty selection; scoring treats that as a
/// zero penalty, while a genuine (possibly negative) maximum passes
/// through unclamped.
fn max_similarity_to(pool: &DemoPool, candidate: usize, selected: &[usize]) -> f64 {
    selected
        .iter()
        .map(|&s| cosine_similarity(&pool.demos[candidate].embedding, &pool.demos[s].embedding))
        .fold(f64::NEG_INFINITY, f64::max)
}

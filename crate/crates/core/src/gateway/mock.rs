//! Hermetic backends for tests and offline pipeline runs.
//!
//! [`MockTextBackend`] answers from a scripted transcript keyed by
//! prompt hash, falling back (when enabled) to a deterministic
//! synthesizer that derives a well-formed reply from the prompt text
//! itself. [`MockEmbeddingBackend`] hashes tokens into stable vectors.

use std::collections::{BTreeMap, VecDeque};
use std::io::BufRead;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    prompt_hash, EmbeddingBackend, EmbeddingVector, GatewayError, Generation, GenerationRequest,
    TextBackend, Usage,
};

/// One scripted outcome for a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptEntry {
    Ok(String),
    Transient(String),
    Permanent(String),
}

/// One line of a transcript file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TranscriptLine {
    prompt_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

/// Parses transcript JSONL into (prompt hash, entry) pairs, in file
/// order. Repeated hashes queue up and replay one per call.
pub fn load_transcript_jsonl<R: BufRead>(
    reader: R,
) -> Result<Vec<(String, ScriptEntry)>, GatewayError> {
    let mut entries = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GatewayError::Protocol {
            message: format!("transcript line {}: {e}", index + 1),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine =
            serde_json::from_str(&line).map_err(|e| GatewayError::Protocol {
                message: format!("transcript line {}: {e}", index + 1),
            })?;
        let entry = match (parsed.response, parsed.error) {
            (Some(text), None) => ScriptEntry::Ok(text),
            (None, Some(kind)) => {
                let message = parsed.message.unwrap_or_else(|| "scripted failure".to_string());
                match kind.as_str() {
                    "transient" => ScriptEntry::Transient(message),
                    "permanent" => ScriptEntry::Permanent(message),
                    other => {
                        return Err(GatewayError::Protocol {
                            message: format!(
                                "transcript line {}: unknown error kind {other:?}",
                                index + 1
                            ),
                        })
                    }
                }
            }
            _ => {
                return Err(GatewayError::Protocol {
                    message: format!(
                        "transcript line {}: exactly one of response/error required",
                        index + 1
                    ),
                })
            }
        };
        entries.push((parsed.prompt_hash, entry));
    }
    Ok(entries)
}

/// Serializes one successful transcript line for a prompt.
pub fn transcript_line(prompt: &str, response: &str) -> String {
    serde_json::to_string(&TranscriptLine {
        prompt_hash: prompt_hash(prompt),
        response: Some(response.to_string()),
        error: None,
        message: None,
    })
    .expect("transcript line serializes")
}

struct MockState {
    scripts: Mutex<BTreeMap<String, VecDeque<ScriptEntry>>>,
    synthesize: bool,
    artificial_delay: Option<Duration>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    log: Mutex<Vec<String>>,
}

/// Scripted text backend with call instrumentation.
#[derive(Clone)]
pub struct MockTextBackend {
    state: Arc<MockState>,
}

impl Default for MockTextBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockTextBackend {
    /// A mock that synthesizes a deterministic reply for any prompt
    /// without a scripted entry.
    pub fn new() -> Self {
        Self::build(true, None)
    }

    /// A mock that fails with [`GatewayError::MissingTranscript`] for
    /// any prompt without a scripted entry.
    pub fn strict() -> Self {
        Self::build(false, None)
    }

    fn build(synthesize: bool, artificial_delay: Option<Duration>) -> Self {
        MockTextBackend {
            state: Arc::new(MockState {
                scripts: Mutex::new(BTreeMap::new()),
                synthesize,
                artificial_delay,
                calls: AtomicUsize::new(0),
                in_flight: AtomicUsize::new(0),
                max_in_flight: AtomicUsize::new(0),
                log: Mutex::new(Vec::new()),
            }),
        }
    }

    /// Sleeps this long inside every call; lets tests observe overlap.
    pub fn with_artificial_delay(self, delay: Duration) -> Self {
        let rebuilt = Self::build(self.state.synthesize, Some(delay));
        *rebuilt.state.scripts.lock().unwrap() = self.state.scripts.lock().unwrap().clone();
        rebuilt
    }

    /// Queues a successful reply for a prompt.
    pub fn script(&self, prompt: &str, response: &str) {
        self.script_entries(prompt, vec![ScriptEntry::Ok(response.to_string())]);
    }

    /// Queues a sequence of outcomes for a prompt, replayed in order.
    pub fn script_entries(&self, prompt: &str, entries: Vec<ScriptEntry>) {
        let mut scripts = self.state.scripts.lock().unwrap();
        scripts
            .entry(prompt_hash(prompt))
            .or_default()
            .extend(entries);
    }

    /// Loads transcript entries produced by [`load_transcript_jsonl`].
    pub fn load_entries(&self, entries: Vec<(String, ScriptEntry)>) {
        let mut scripts = self.state.scripts.lock().unwrap();
        for (hash, entry) in entries {
            scripts.entry(hash).or_default().push_back(entry);
        }
    }

    pub fn call_count(&self) -> usize {
        self.state.calls.load(Ordering::SeqCst)
    }

    /// Highest number of calls observed simultaneously in flight.
    pub fn max_in_flight(&self) -> usize {
        self.state.max_in_flight.load(Ordering::SeqCst)
    }

    /// Prompt hashes in call order.
    pub fn call_log(&self) -> Vec<String> {
        self.state.log.lock().unwrap().clone()
    }
}

impl TextBackend for MockTextBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<Generation, GatewayError> {
        self.state.calls.fetch_add(1, Ordering::SeqCst);
        let current = self.state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.state.max_in_flight.fetch_max(current, Ordering::SeqCst);
        if let Some(delay) = self.state.artificial_delay {
            std::thread::sleep(delay);
        }
        let hash = prompt_hash(&request.prompt);
        self.state.log.lock().unwrap().push(hash.clone());

        let entry = self
            .state
            .scripts
            .lock()
            .unwrap()
            .get_mut(&hash)
            .and_then(VecDeque::pop_front);
        let result = match entry {
            Some(ScriptEntry::Ok(text)) => Ok(reply(&request.prompt, text)),
            Some(ScriptEntry::Transient(message)) => Err(GatewayError::Transient { message }),
            Some(ScriptEntry::Permanent(message)) => Err(GatewayError::Permanent { message }),
            None if self.state.synthesize => Ok(reply(&request.prompt, synthesize(request))),
            None => Err(GatewayError::MissingTranscript { prompt_hash: hash }),
        };
        self.state.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    fn name(&self) -> &str {
        "mock"
    }
}

fn reply(prompt: &str, text: String) -> Generation {
    let usage = Usage {
        prompt_tokens: Some((prompt.len() / 4) as u64),
        completion_tokens: Some((text.len() / 4) as u64),
    };
    Generation {
        text,
        usage,
        backend: "mock".to_string(),
    }
}

fn seed_from(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

const FILL_PHRASES: [&str; 12] = [
    "find people who went through the same thing",
    "make sense of a confusing situation",
    "what happened was outside anyone's control",
    "things will settle down over time",
    "relieved that the hardest part is over",
    "the support offered felt genuine",
    "honesty matters more than comfort",
    "speaking up was the right call",
    "curious about how it resolves",
    "the details made it feel real",
    "others would have handled it the same way",
    "the outcome could have been much worse",
];

const SUMMARY_CLAUSES: [&str; 8] = [
    "describes a personal situation and how it unfolded",
    "recounts a decision the author had to make",
    "asks the community for perspective on what happened",
    "reflects on an event that changed the author's outlook",
    "responds to earlier replies with more detail",
    "offers advice drawn from a similar experience",
    "questions part of the account given earlier",
    "adds context about the people involved",
];

fn is_label_like(candidate: &str) -> bool {
    !candidate.is_empty()
        && candidate.chars().next().is_some_and(|c| c.is_ascii_lowercase())
        && candidate
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Labels advertised by a classification prompt, in order of first
/// appearance: lines of the form `- some_label: definition`.
fn prompt_labels(prompt: &str) -> Vec<String> {
    let mut labels = Vec::new();
    for line in prompt.lines() {
        let trimmed = line.trim();
        let Some(rest) = trimmed.strip_prefix("- ") else {
            continue;
        };
        let Some((candidate, _)) = rest.split_once(':') else {
            continue;
        };
        let candidate = candidate.trim();
        if is_label_like(candidate) && !labels.iter().any(|l| l == candidate) {
            labels.push(candidate.to_string());
        }
    }
    labels
}

/// The sentence template embedded in a generation prompt's trailing
/// `{"response": "..."}` instruction, if one is present.
fn embedded_template(prompt: &str) -> Option<String> {
    let start = prompt.rfind("{\"response\":")?;
    let tail = prompt[start..].trim_end();
    let parsed: serde_json::Value = serde_json::from_str(tail).ok()?;
    let template = parsed.get("response")?.as_str()?;
    if template.contains("{{") {
        Some(template.to_string())
    } else {
        None
    }
}

fn fill_template(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let fill = FILL_PHRASES[rng.random_range(0..FILL_PHRASES.len())];
                out.push_str(fill);
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Derives a deterministic, well-formed reply from the prompt alone.
///
/// Recognizes the three reply shapes used by the pipeline: a JSON
/// label array for classification prompts, a JSON object wrapping a
/// filled sentence template for generation prompts, and prose (with
/// any requested opener) for summarization prompts. The reply is a
/// pure function of the prompt text and request tag.
fn synthesize(request: &GenerationRequest) -> String {
    let prompt = request.prompt.as_str();
    let mut rng = ChaCha8Rng::seed_from_u64(seed_from(&[prompt, &request.tag]));

    if prompt.contains("{\"response\": [\"category_a\"") {
        let labels = prompt_labels(prompt);
        if !labels.is_empty() {
            let count = 1 + rng.random_range(0..2usize).min(labels.len() - 1);
            let mut indices: Vec<usize> = (0..labels.len()).collect();
            for i in 0..count {
                let j = rng.random_range(i..indices.len());
                indices.swap(i, j);
            }
            let picked: Vec<&str> = indices[..count].iter().map(|&i| labels[i].as_str()).collect();
            return serde_json::json!({ "response": picked }).to_string();
        }
    }

    if let Some(template) = embedded_template(prompt) {
        let filled = fill_template(&template, &mut rng);
        return serde_json::json!({ "response": filled }).to_string();
    }

    let clause = SUMMARY_CLAUSES[rng.random_range(0..SUMMARY_CLAUSES.len())];
    let second = SUMMARY_CLAUSES[rng.random_range(0..SUMMARY_CLAUSES.len())];
    if prompt.contains("Start your response with 'The first post") {
        format!("The first post {clause}.")
    } else if prompt.contains("Start your response with 'The conversation so far") {
        format!("The conversation so far includes a post that {clause} and a reply that {second}.")
    } else {
        let mut text = format!("This text {clause}.");
        if second != clause {
            text.push_str(&format!(" It also {second}."));
        }
        text
    }
}

/// Deterministic embedder: each lowercase whitespace token hashes to a
/// stable direction and a text embeds as the mean of its token vectors.
pub struct MockEmbeddingBackend {
    dimension: usize,
}

impl MockEmbeddingBackend {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        MockEmbeddingBackend { dimension }
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_from(&["token", token]));
        (0..self.dimension)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }
}

impl EmbeddingBackend for MockEmbeddingBackend {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let mut vectors = Vec::with_capacity(texts.len());
        for text in texts {
            let lowered = text.to_lowercase();
            let tokens: Vec<&str> = lowered.split_whitespace().collect();
            let mut acc = vec![0.0f64; self.dimension];
            if tokens.is_empty() {
                acc = self.token_vector("");
            } else {
                for token in &tokens {
                    for (slot, value) in acc.iter_mut().zip(self.token_vector(token)) {
                        *slot += value;
                    }
                }
                for slot in acc.iter_mut() {
                    *slot /= tokens.len() as f64;
                }
            }
            vectors.push(EmbeddingVector {
                values: acc,
                model: "mock-hash".to_string(),
            });
        }
        Ok(vectors)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn name(&self) -> &str {
        "mock-hash"
    }
}

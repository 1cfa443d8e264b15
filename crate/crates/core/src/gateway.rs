//! Pluggable text-generation and embedding backends.
//!
//! [`Gateway`] wraps a [`TextBackend`] (and optionally an
//! [`EmbeddingBackend`]) with retry-on-transient-failure, exponential
//! backoff, and bounded-concurrency batch execution that delivers
//! results in input order. [`mock`] provides hermetic backends for
//! tests and offline runs; [`http`] adapts JSON-over-HTTP vendor APIs.

pub mod http;
pub mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Hex SHA-256 of a prompt; the key used by transcripts and caches.
pub fn prompt_hash(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

/// One text-generation call.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    /// Sampling temperature; defaults to 0 for reproducible decoding.
    pub temperature: f64,
    /// Nucleus sampling mass in (0, 1]; defaults to 1.
    pub top_p: f64,
    pub max_tokens: Option<u32>,
    /// Caller-chosen idempotency tag, carried through retries and logs.
    pub tag: String,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, tag: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: None,
            tag: tag.into(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest {
                message: format!("temperature must be >= 0, got {}", self.temperature),
            });
        }
        if !self.top_p.is_finite() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(GatewayError::InvalidRequest {
                message: format!("top_p must be in (0, 1], got {}", self.top_p),
            });
        }
        Ok(())
    }
}

/// Token accounting reported by a backend, when available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// A completed generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub usage: Usage,
    /// Name of the backend that produced the text.
    pub backend: String,
}

/// One embedding, tagged with the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model: String,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {message}")]
    InvalidRequest { message: String },
    #[error("transient backend failure: {message}")]
    Transient { message: String },
    #[error("backend failure: {message}")]
    Permanent { message: String },
    #[error("malformed backend reply: {message}")]
    Protocol { message: String },
    #[error("no transcript entry for prompt hash {prompt_hash}")]
    MissingTranscript { prompt_hash: String },
    #[error("gateway has no embedding backend configured")]
    NoEmbedder,
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot normalize a zero or non-finite embedding")]
    ZeroVector,
}

impl GatewayError {
    /// Whether a retry could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transient { .. })
    }
}

/// A text-generation provider.
pub trait TextBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<Generation, GatewayError>;
    fn name(&self) -> &str;
}

/// An embedding provider.
pub trait EmbeddingBackend: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;
    fn dimension(&self) -> usize;
    fn name(&self) -> &str;
}

/// Retry schedule for transient failures: attempt `max_retries` extra
/// calls, sleeping `base_delay * 2^k` (capped) before retry `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    fn delay_before_retry(&self, retry_index: u32) -> Duration {
        let factor = 1u32.checked_shl(retry_index).unwrap_or(u32::MAX);
        self.base_delay
            .checked_mul(factor)
            .map_or(self.max_delay, |d| d.min(self.max_delay))
    }
}

/// Front door for all model calls made by the pipeline.
pub struct Gateway {
    text: Box<dyn TextBackend>,
    embedder: Option<Box<dyn EmbeddingBackend>>,
    retry: RetryPolicy,
    max_concurrency: usize,
}

impl Gateway {
    pub fn new(text: Box<dyn TextBackend>) -> Self {
        Gateway {
            text,
            embedder: None,
            retry: RetryPolicy::default(),
            max_concurrency: 4,
        }
    }

    pub fn with_embedder(mut self, embedder: Box<dyn EmbeddingBackend>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Caps the number of in-flight generate calls; minimum 1.
    pub fn with_max_concurrency(mut self, max_concurrency: usize) -> Self {
        self.max_concurrency = max_concurrency.max(1);
        self
    }

    pub fn backend_name(&self) -> &str {
        self.text.name()
    }

    pub fn embedding_dimension(&self) -> Option<usize> {
        self.embedder.as_ref().map(|e| e.dimension())
    }

    /// One generation with validation and transient-failure retries.
    pub fn generate(&self, request: &GenerationRequest) -> Result<Generation, GatewayError> {
        request.validate()?;
        let mut attempt = 0u32;
        loop {
            match self.text.generate(request) {
                Ok(generation) => return Ok(generation),
                Err(err) if err.is_transient() && attempt < self.retry.max_retries => {
                    std::thread::sleep(self.retry.delay_before_retry(attempt));
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }

    /// Runs many generations with at most `max_concurrency` in flight.
    /// The result vector lines up with the input order regardless of
    /// completion order.
    pub fn generate_batch(
        &self,
        requests: &[GenerationRequest],
    ) -> Vec<Result<Generation, GatewayError>> {
        let n = requests.len();
        let workers = self.max_concurrency.min(n).max(1);
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<Generation, GatewayError>>>> =
            Mutex::new((0..n).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    if index >= n {
                        break;
                    }
                    let result = self.generate(&requests[index]);
                    slots.lock().expect("slot lock never poisoned")[index] = Some(result);
                });
            }
        });
        slots
            .into_inner()
            .expect("all workers joined")
            .into_iter()
            .map(|slot| slot.expect("every index was processed"))
            .collect()
    }

    /// Embeds texts in order, optionally scaling each vector to unit
    /// L2 norm. All vectors in a batch must share one dimension.
    pub fn embed(
        &self,
        texts: &[String],
        normalize: bool,
    ) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let embedder = self.embedder.as_ref().ok_or(GatewayError::NoEmbedder)?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut attempt = 0u32;
        let mut vectors = loop {
            match embedder.embed_batch(texts) {
                Ok(vectors) => break vectors,
                Err(err) if err.is_transient() && attempt < self.retry.max_retries => {
                    std::thread::sleep(self.retry.delay_before_retry(attempt));
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        };
        if vectors.len() != texts.len() {
            return Err(GatewayError::Protocol {
                message: format!(
                    "embedding backend returned {} vectors for {} texts",
                    vectors.len(),
                    texts.len()
                ),
            });
        }
        let expected = vectors[0].values.len();
        for vector in &vectors {
            if vector.values.len() != expected {
                return Err(GatewayError::DimensionMismatch {
                    expected,
                    found: vector.values.len(),
                });
            }
        }
        if normalize {
            for vector in &mut vectors {
                l2_normalize(&mut vector.values)?;
            }
        }
        Ok(vectors)
    }
}

/// Scales a vector to unit L2 norm in place.
pub fn l2_normalize(values: &mut [f64]) -> Result<(), GatewayError> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(GatewayError::ZeroVector);
    }
    for v in values.iter_mut() {
        *v /= norm;
    }
    Ok(())
}

/// Cosine similarity between two equal-length vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    dot / (norm_a * norm_b)
}

#[cfg(test)]
mod tests {
    use super::mock::{MockEmbeddingBackend, MockTextBackend, ScriptEntry};
    use super::*;

    fn fast_retry(max_retries: u32) -> RetryPolicy {
        RetryPolicy {
            max_retries,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(4),
        }
    }

    #[test]
    fn request_validation_rejects_bad_sampling_params() {
        let mut req = GenerationRequest::new("p", "t");
        assert_eq!(req.temperature, 0.0);
        assert_eq!(req.top_p, 1.0);
        req.validate().unwrap();

        req.temperature = -0.1;
        assert!(matches!(
            req.validate(),
            Err(GatewayError::InvalidRequest { .. })
        ));
        req.temperature = 0.7;
        req.top_p = 0.0;
        assert!(matches!(
            req.validate(),
            Err(GatewayError::InvalidRequest { .. })
        ));
        req.top_p = 1.5;
        assert!(matches!(
            req.validate(),
            Err(GatewayError::InvalidRequest { .. })
        ));
    }

    #[test]
    fn transient_failures_are_retried_until_success() {
        let mock = MockTextBackend::new();
        mock.script_entries(
            "flaky prompt",
            vec![
                ScriptEntry::Transient("503".to_string()),
                ScriptEntry::Transient("503 again".to_string()),
                ScriptEntry::Ok("recovered".to_string()),
            ],
        );
        let gateway = Gateway::new(Box::new(mock.clone())).with_retry(fast_retry(3));
        let generation = gateway
            .generate(&GenerationRequest::new("flaky prompt", "t"))
            .unwrap();
        assert_eq!(generation.text, "recovered");
        assert_eq!(mock.call_count(), 3);
    }

    #[test]
    fn retry_cap_is_enforced() {
        let mock = MockTextBackend::new();
        mock.script_entries(
            "always down",
            vec![
                ScriptEntry::Transient("one".to_string()),
                ScriptEntry::Transient("two".to_string()),
                ScriptEntry::Transient("three".to_string()),
            ],
        );
        let gateway = Gateway::new(Box::new(mock.clone())).with_retry(fast_retry(1));
        let err = gateway
            .generate(&GenerationRequest::new("always down", "t"))
            .unwrap_err();
        assert!(err.is_transient());
        assert_eq!(mock.call_count(), 2);
    }

    #[test]
    fn permanent_failures_are_not_retried() {
        let mock = MockTextBackend::new();
        mock.script_entries(
            "bad request",
            vec![ScriptEntry::Permanent("401".to_string())],
        );
        let gateway = Gateway::new(Box::new(mock.clone())).with_retry(fast_retry(5));
        let err = gateway
            .generate(&GenerationRequest::new("bad request", "t"))
            .unwrap_err();
        assert!(!err.is_transient());
        assert_eq!(mock.call_count(), 1);
    }

    #[test]
    fn batch_results_arrive_in_input_order_under_concurrency_cap() {
        let mock = MockTextBackend::new().with_artificial_delay(Duration::from_millis(3));
        let mut requests = Vec::new();
        for i in 0..24 {
            let prompt = format!("prompt number {i}");
            mock.script(&prompt, &format!("reply number {i}"));
            requests.push(GenerationRequest::new(prompt, format!("tag-{i}")));
        }
        let gateway = Gateway::new(Box::new(mock.clone())).with_max_concurrency(4);
        let results = gateway.generate_batch(&requests);
        assert_eq!(results.len(), 24);
        for (i, result) in results.iter().enumerate() {
            assert_eq!(result.as_ref().unwrap().text, format!("reply number {i}"));
        }
        assert!(
            mock.max_in_flight() <= 4,
            "in-flight peak {} exceeded cap",
            mock.max_in_flight()
        );
        assert!(
            mock.max_in_flight() >= 2,
            "expected overlapping calls, peak was {}",
            mock.max_in_flight()
        );
    }

    #[test]
    fn batch_with_fewer_requests_than_workers_works() {
        let mock = MockTextBackend::new();
        mock.script("only", "reply");
        let gateway = Gateway::new(Box::new(mock)).with_max_concurrency(8);
        let results = gateway.generate_batch(&[GenerationRequest::new("only", "t")]);
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].as_ref().unwrap().text, "reply");
    }

    #[test]
    fn normalize_scales_to_unit_norm() {
        let mut v = vec![3.0, 4.0];
        l2_normalize(&mut v).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12);
        assert!((v[1] - 0.8).abs() < 1e-12);

        let mut zero = vec![0.0, 0.0];
        assert!(matches!(
            l2_normalize(&mut zero),
            Err(GatewayError::ZeroVector)
        ));
    }

    #[test]
    fn embed_preserves_order_and_normalizes() {
        let gateway = Gateway::new(Box::new(MockTextBackend::new()))
            .with_embedder(Box::new(MockEmbeddingBackend::new(16)));
        let texts: Vec<String> = (0..5).map(|i| format!("text {i}")).collect();
        let vectors = gateway.embed(&texts, true).unwrap();
        assert_eq!(vectors.len(), 5);
        for vector in &vectors {
            assert_eq!(vector.values.len(), 16);
            let norm: f64 = vector.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "norm was {norm}");
        }
        let again = gateway.embed(&texts, true).unwrap();
        assert_eq!(vectors, again);
        // Distinct texts land on distinct directions.
        assert!(cosine_similarity(&vectors[0].values, &vectors[1].values) < 0.999);
    }

    #[test]
    fn embed_without_embedder_is_an_error() {
        let gateway = Gateway::new(Box::new(MockTextBackend::new()));
        assert!(matches!(
            gateway.embed(&["x".to_string()], false),
            Err(GatewayError::NoEmbedder)
        ));
    }

    struct RaggedEmbedder;
    impl EmbeddingBackend for RaggedEmbedder {
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
            Ok(texts
                .iter()
                .enumerate()
                .map(|(i, _)| EmbeddingVector {
                    values: vec![1.0; 4 + i],
                    model: "ragged".to_string(),
                })
                .collect())
        }
        fn dimension(&self) -> usize {
            4
        }
        fn name(&self) -> &str {
            "ragged"
        }
    }

    #[test]
    fn mismatched_embedding_dimensions_are_rejected() {
        let gateway =
            Gateway::new(Box::new(MockTextBackend::new())).with_embedder(Box::new(RaggedEmbedder));
        let texts = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            gateway.embed(&texts, false),
            Err(GatewayError::DimensionMismatch {
                expected: 4,
                found: 5
            })
        ));
    }

    #[test]
    fn cosine_similarity_basics() {
        assert!((cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).abs() < 1e-12);
        assert!((cosine_similarity(&[1.0, 0.0], &[-1.0, 0.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn prompt_hash_is_stable_hex_sha256() {
        assert_eq!(
            prompt_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_ne!(prompt_hash("a"), prompt_hash("b"));
    }
}

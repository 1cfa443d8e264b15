//! JSON-over-HTTP backend speaking the widely implemented
//! `/chat/completions` and `/embeddings` wire format.
//!
//! The API key is read from an environment variable at construction
//! time and sent as a bearer token when present; local servers that
//! skip auth work with the variable unset. HTTP 429 and 5xx map to
//! transient errors so the gateway's retry policy applies.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    EmbeddingBackend, EmbeddingVector, GatewayError, Generation, GenerationRequest, TextBackend,
    Usage,
};

/// Endpoint, model, and auth settings shared by both HTTP backends.
#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Base URL up to but excluding the endpoint path, e.g.
    /// `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key, if any.
    pub api_key_env: String,
    pub timeout: Duration,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpBackendConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: "SSF_API_KEY".to_string(),
            timeout: Duration::from_secs(120),
        }
    }
}

fn build_client(config: &HttpBackendConfig) -> Result<reqwest::blocking::Client, GatewayError> {
    reqwest::blocking::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| GatewayError::Permanent {
            message: format!("building http client: {e}"),
        })
}

fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value, GatewayError> {
    let mut request = client.post(url).json(body);
    if let Some(key) = api_key {
        request = request.bearer_auth(key);
    }
    let response = request.send().map_err(|e| {
        if e.is_timeout() || e.is_connect() {
            GatewayError::Transient {
                message: format!("request to {url}: {e}"),
            }
        } else {
            GatewayError::Permanent {
                message: format!("request to {url}: {e}"),
            }
        }
    })?;
    let status = response.status();
    let text = response.text().map_err(|e| GatewayError::Transient {
        message: format!("reading response body: {e}"),
    })?;
    if status.as_u16() == 429 || status.is_server_error() {
        return Err(GatewayError::Transient {
            message: format!("{url} returned {status}: {}", truncate(&text)),
        });
    }
    if !status.is_success() {
        return Err(GatewayError::Permanent {
            message: format!("{url} returned {status}: {}", truncate(&text)),
        });
    }
    serde_json::from_str(&text).map_err(|e| GatewayError::Protocol {
        message: format!("{url} returned non-JSON body: {e}"),
    })
}

fn truncate(text: &str) -> &str {
    let cut = text
        .char_indices()
        .nth(200)
        .map_or(text.len(), |(index, _)| index);
    &text[..cut]
}

#[derive(Debug, Deserialize)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<WireUsage>,
}

/// Text generation over `/chat/completions`.
pub struct HttpTextBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    name: String,
}

impl HttpTextBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, GatewayError> {
        let client = build_client(&config)?;
        let api_key = std::env::var(&config.api_key_env).ok();
        let name = format!("http:{}", config.model);
        Ok(HttpTextBackend {
            config,
            client,
            api_key,
            name,
        })
    }
}

impl TextBackend for HttpTextBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<Generation, GatewayError> {
        let url = format!("{}/chat/completions", self.config.base_url);
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
        });
        if let Some(max_tokens) = request.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }
        let value = post_json(&self.client, &url, self.api_key.as_deref(), &body)?;
        let parsed: ChatResponse =
            serde_json::from_value(value).map_err(|e| GatewayError::Protocol {
                message: format!("unexpected chat completion shape: {e}"),
            })?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Protocol {
                message: "chat completion had no choices".to_string(),
            })?;
        let usage = parsed.usage.map_or(Usage::default(), |u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        });
        Ok(Generation {
            text: choice.message.content,
            usage,
            backend: self.name.clone(),
        })
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

/// Embeddings over `/embeddings`.
pub struct HttpEmbeddingBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    dimension: usize,
    name: String,
}

impl HttpEmbeddingBackend {
    pub fn new(config: HttpBackendConfig, dimension: usize) -> Result<Self, GatewayError> {
        let client = build_client(&config)?;
        let api_key = std::env::var(&config.api_key_env).ok();
        let name = format!("http:{}", config.model);
        Ok(HttpEmbeddingBackend {
            config,
            client,
            api_key,
            dimension,
            name,
        })
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let url = format!("{}/embeddings", self.config.base_url);
        let body = json!({
            "model": self.config.model,
            "input": texts,
        });
        let value = post_json(&self.client, &url, self.api_key.as_deref(), &body)?;
        let parsed: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| GatewayError::Protocol {
                message: format!("unexpected embedding shape: {e}"),
            })?;
        if parsed.data.len() != texts.len() {
            return Err(GatewayError::Protocol {
                message: format!(
                    "asked for {} embeddings, got {}",
                    texts.len(),
                    parsed.data.len()
                ),
            });
        }
        let mut data = parsed.data;
        data.sort_by_key(|d| d.index);
        Ok(data
            .into_iter()
            .map(|d| EmbeddingVector {
                values: d.embedding,
                model: self.name.clone(),
            })
            .collect())
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Serves one canned HTTP response on a fresh local port, then
    /// returns the request bytes it received.
    fn one_shot_server(
        status_line: &'static str,
        body: &'static str,
    ) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind local port");
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().expect("accept connection");
            let mut received = Vec::new();
            let mut buffer = [0u8; 4096];
            loop {
                let n = stream.read(&mut buffer).expect("read request");
                received.extend_from_slice(&buffer[..n]);
                let text = String::from_utf8_lossy(&received);
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|line| {
                            line.to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if received.len() >= header_end + 4 + content_length {
                        break;
                    }
                }
            }
            let response = format!(
                "{status_line}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).expect("write response");
            String::from_utf8_lossy(&received).to_string()
        });
        (format!("http://{addr}"), handle)
    }

    fn config(base_url: &str) -> HttpBackendConfig {
        let mut config = HttpBackendConfig::new(base_url, "test-model");
        config.api_key_env = "SSF_TEST_KEY_UNSET".to_string();
        config.timeout = Duration::from_secs(5);
        config
    }

    #[test]
    fn chat_completion_happy_path() {
        let (base_url, server) = one_shot_server(
            "HTTP/1.1 200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"hi there"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#,
        );
        let backend = HttpTextBackend::new(config(&base_url)).unwrap();
        let mut request = GenerationRequest::new("say hi", "t");
        request.max_tokens = Some(64);
        let generation = backend.generate(&request).unwrap();
        assert_eq!(generation.text, "hi there");
        assert_eq!(generation.usage.prompt_tokens, Some(12));
        assert_eq!(generation.usage.completion_tokens, Some(3));

        let received = server.join().unwrap();
        assert!(received.starts_with("POST /chat/completions"));
        assert!(received.contains("\"say hi\""));
        assert!(received.contains("\"max_tokens\":64"));
        assert!(received.contains("\"temperature\":0.0"));
    }

    #[test]
    fn server_errors_map_to_transient() {
        let (base_url, server) =
            one_shot_server("HTTP/1.1 503 Service Unavailable", r#"{"error":"busy"}"#);
        let backend = HttpTextBackend::new(config(&base_url)).unwrap();
        let err = backend
            .generate(&GenerationRequest::new("p", "t"))
            .unwrap_err();
        assert!(err.is_transient(), "got {err:?}");
        server.join().unwrap();
    }

    #[test]
    fn client_errors_map_to_permanent() {
        let (base_url, server) =
            one_shot_server("HTTP/1.1 404 Not Found", r#"{"error":"no such model"}"#);
        let backend = HttpTextBackend::new(config(&base_url)).unwrap();
        let err = backend
            .generate(&GenerationRequest::new("p", "t"))
            .unwrap_err();
        assert!(!err.is_transient(), "got {err:?}");
        server.join().unwrap();
    }

    #[test]
    fn malformed_body_maps_to_protocol_error() {
        let (base_url, server) = one_shot_server("HTTP/1.1 200 OK", r#"{"choices":[]}"#);
        let backend = HttpTextBackend::new(config(&base_url)).unwrap();
        let err = backend
            .generate(&GenerationRequest::new("p", "t"))
            .unwrap_err();
        assert!(matches!(err, GatewayError::Protocol { .. }), "got {err:?}");
        server.join().unwrap();
    }

    #[test]
    fn embeddings_come_back_in_index_order() {
        let (base_url, server) = one_shot_server(
            "HTTP/1.1 200 OK",
            r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#,
        );
        let backend = HttpEmbeddingBackend::new(config(&base_url), 2).unwrap();
        let vectors = backend
            .embed_batch(&["first".to_string(), "second".to_string()])
            .unwrap();
        assert_eq!(vectors[0].values, vec![1.0, 0.0]);
        assert_eq!(vectors[1].values, vec![0.0, 1.0]);

        let received = server.join().unwrap();
        assert!(received.starts_with("POST /embeddings"));
        assert!(received.contains("\"input\":[\"first\",\"second\"]"));
    }

    #[test]
    fn embedding_count_mismatch_is_a_protocol_error() {
        let (base_url, server) = one_shot_server(
            "HTTP/1.1 200 OK",
            r#"{"data":[{"index":0,"embedding":[1.0]}]}"#,
        );
        let backend = HttpEmbeddingBackend::new(config(&base_url), 1).unwrap();
        let err = backend
            .embed_batch(&["a".to_string(), "b".to_string()])
            .unwrap_err();
        assert!(matches!(err, GatewayError::Protocol { .. }));
        server.join().unwrap();
    }
}

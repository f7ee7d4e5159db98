//! JSON-over-HTTP provider adapters.
//!
//! One adapter per capability, each speaking a minimal JSON protocol:
//!
//! - `POST {base}/generate` `{"prompt", "max_tokens", "temperature"}` -> `{"text"}`
//! - `POST {base}/embed` `{"texts": [..]}` -> `{"vectors": [[..]]}`
//! - `POST {base}/score` `{"pairs": [[query, document], ..]}` -> `{"scores": [..]}`
//! - `POST {base}/ner` `{"text"}` -> `{"entities": [{"surface","start","end"}, ..]}`
//!
//! Transport failures and 5xx responses are retried with exponential
//! backoff; other statuses fail immediately with the status and a body
//! excerpt. Payload text passes through byte-for-byte.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    check_uniform_dim, EmbeddingVector, EntityRecognizer, GenerationParams, PairScorer,
    ProviderError, RecognizedEntity, TextEmbedder, TextGenerator,
};

pub const GENERATOR_URL_ENV: &str = "HYKGE_GENERATOR_URL";
pub const EMBEDDER_URL_ENV: &str = "HYKGE_EMBEDDER_URL";
pub const SCORER_URL_ENV: &str = "HYKGE_SCORER_URL";
pub const NER_URL_ENV: &str = "HYKGE_NER_URL";

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Clone)]
struct Endpoint {
    url: String,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

impl Endpoint {
    fn new(base_url: &str, path: &str, retry: RetryPolicy) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .expect("default reqwest client");
        Endpoint {
            url: format!("{}/{}", base_url.trim_end_matches('/'), path),
            client,
            retry,
        }
    }

    fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        body: &B,
    ) -> Result<R, ProviderError> {
        let mut backoff = self.retry.initial_backoff;
        let mut last_err = None;
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            match self.client.post(&self.url).json(body).send() {
                Err(e) => {
                    last_err = Some(ProviderError::Transport {
                        endpoint: self.url.clone(),
                        message: e.to_string(),
                    });
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let bytes = resp.bytes().map_err(|e| ProviderError::Transport {
                            endpoint: self.url.clone(),
                            message: e.to_string(),
                        })?;
                        return serde_json::from_slice(&bytes).map_err(|e| {
                            ProviderError::InvalidResponse {
                                endpoint: self.url.clone(),
                                message: e.to_string(),
                            }
                        });
                    }
                    let body_excerpt = excerpt(&resp.text().unwrap_or_default());
                    let err = ProviderError::Status {
                        endpoint: self.url.clone(),
                        status: status.as_u16(),
                        body_excerpt,
                    };
                    if status.is_server_error() {
                        last_err = Some(err);
                    } else {
                        return Err(err);
                    }
                }
            }
        }
        Err(last_err.unwrap_or(ProviderError::Transport {
            endpoint: self.url.clone(),
            message: "no attempts made".to_string(),
        }))
    }
}

fn excerpt(body: &str) -> String {
    const LIMIT: usize = 200;
    if body.chars().count() <= LIMIT {
        body.to_string()
    } else {
        let cut: String = body.chars().take(LIMIT).collect();
        format!("{cut}…")
    }
}

fn env_url(var: &str) -> Result<String, ProviderError> {
    std::env::var(var).map_err(|_| ProviderError::MissingConfig(format!("env var {var} not set")))
}

pub struct HttpGenerator {
    endpoint: Endpoint,
}

impl HttpGenerator {
    pub fn new(base_url: &str) -> Self {
        Self::with_retry(base_url, RetryPolicy::default())
    }

    pub fn with_retry(base_url: &str, retry: RetryPolicy) -> Self {
        HttpGenerator {
            endpoint: Endpoint::new(base_url, "generate", retry),
        }
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        Ok(Self::new(&env_url(GENERATOR_URL_ENV)?))
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

impl TextGenerator for HttpGenerator {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, ProviderError> {
        if prompt.is_empty() {
            return Err(ProviderError::EmptyInput("prompt"));
        }
        let resp: GenerateResponse = self.endpoint.post_json(&GenerateRequest {
            prompt,
            max_tokens: params.max_tokens,
            temperature: params.temperature,
        })?;
        Ok(resp.text)
    }
}

pub struct HttpEmbedder {
    endpoint: Endpoint,
}

impl HttpEmbedder {
    pub fn new(base_url: &str) -> Self {
        Self::with_retry(base_url, RetryPolicy::default())
    }

    pub fn with_retry(base_url: &str, retry: RetryPolicy) -> Self {
        HttpEmbedder {
            endpoint: Endpoint::new(base_url, "embed", retry),
        }
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        Ok(Self::new(&env_url(EMBEDDER_URL_ENV)?))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

impl TextEmbedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        for t in texts {
            if t.is_empty() {
                return Err(ProviderError::EmptyInput("text to embed"));
            }
        }
        let resp: EmbedResponse = self.endpoint.post_json(&EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(ProviderError::InvalidResponse {
                endpoint: self.endpoint.url.clone(),
                message: format!(
                    "expected {} vectors, got {}",
                    texts.len(),
                    resp.vectors.len()
                ),
            });
        }
        let vectors: Result<Vec<EmbeddingVector>, ProviderError> = resp
            .vectors
            .into_iter()
            .map(EmbeddingVector::from_raw)
            .collect();
        let vectors = vectors?;
        check_uniform_dim(&vectors)?;
        Ok(vectors)
    }

    fn tag(&self) -> String {
        format!("http-embedder:{}", self.endpoint.url)
    }
}

pub struct HttpScorer {
    endpoint: Endpoint,
}

impl HttpScorer {
    pub fn new(base_url: &str) -> Self {
        Self::with_retry(base_url, RetryPolicy::default())
    }

    pub fn with_retry(base_url: &str, retry: RetryPolicy) -> Self {
        HttpScorer {
            endpoint: Endpoint::new(base_url, "score", retry),
        }
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        Ok(Self::new(&env_url(SCORER_URL_ENV)?))
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    pairs: &'a [(String, String)],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

impl PairScorer for HttpScorer {
    fn score_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ProviderError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let resp: ScoreResponse = self.endpoint.post_json(&ScoreRequest { pairs })?;
        if resp.scores.len() != pairs.len() {
            return Err(ProviderError::InvalidResponse {
                endpoint: self.endpoint.url.clone(),
                message: format!("expected {} scores, got {}", pairs.len(), resp.scores.len()),
            });
        }
        Ok(resp.scores)
    }
}

pub struct HttpRecognizer {
    endpoint: Endpoint,
}

impl HttpRecognizer {
    pub fn new(base_url: &str) -> Self {
        Self::with_retry(base_url, RetryPolicy::default())
    }

    pub fn with_retry(base_url: &str, retry: RetryPolicy) -> Self {
        HttpRecognizer {
            endpoint: Endpoint::new(base_url, "ner", retry),
        }
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        Ok(Self::new(&env_url(NER_URL_ENV)?))
    }
}

#[derive(Serialize)]
struct NerRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct NerResponse {
    entities: Vec<RecognizedEntity>,
}

impl EntityRecognizer for HttpRecognizer {
    fn recognize(&self, text: &str) -> Result<Vec<RecognizedEntity>, ProviderError> {
        if text.is_empty() {
            return Ok(Vec::new());
        }
        let resp: NerResponse = self.endpoint.post_json(&NerRequest { text })?;
        let chars: Vec<char> = text.chars().collect();
        for e in &resp.entities {
            let valid = e.start < e.end
                && e.end <= chars.len()
                && chars[e.start..e.end].iter().collect::<String>() == e.surface;
            if !valid {
                return Err(ProviderError::InvalidResponse {
                    endpoint: self.endpoint.url.clone(),
                    message: format!(
                        "span ({}, {}) does not match surface {:?}",
                        e.start, e.end, e.surface
                    ),
                });
            }
        }
        Ok(resp.entities)
    }
}

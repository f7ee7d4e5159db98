//! Provider interfaces for the four external models.
//!
//! The pipeline depends on capabilities, not concrete models: a text
//! generator, a text embedder, a pair scorer, and an entity recognizer.
//! [`doubles`] supplies deterministic in-process implementations for tests
//! and offline runs; [`http`] supplies JSON-over-HTTP adapters for real
//! model servers. Every implementation must be safe to call from concurrent
//! pipeline executions.

pub mod doubles;
pub mod http;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling parameters for text generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_tokens: 500,
            temperature: 0.6,
        }
    }
}

/// A unit-L2-norm embedding. Vectors are normalized on receipt so inner
/// products are cosine similarities bounded by 1, which keeps the linking
/// threshold meaningful on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalize a raw vector to unit L2 norm.
    pub fn from_raw(values: Vec<f32>) -> Result<Self, ProviderError> {
        if values.is_empty() {
            return Err(ProviderError::InvalidEmbedding("empty vector".to_string()));
        }
        let norm = values.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(ProviderError::InvalidEmbedding(format!(
                "vector norm {norm} cannot be normalized"
            )));
        }
        Ok(EmbeddingVector(
            values.into_iter().map(|v| (v as f64 / norm) as f32).collect(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| *a as f64 * *b as f64)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// One entity span found by a recognizer. Offsets count characters, not
/// bytes, and `surface` equals the text slice between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognizedEntity {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    /// Connection-level failure; worth retrying.
    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },
    #[error("{endpoint} returned status {status}: {body_excerpt}")]
    Status {
        endpoint: String,
        status: u16,
        body_excerpt: String,
    },
    #[error("invalid response from {endpoint}: {message}")]
    InvalidResponse { endpoint: String, message: String },
    #[error("embedding dimension mismatch in batch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("missing configuration: {0}")]
    MissingConfig(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

impl ProviderError {
    /// Transport failures (and 5xx, which the HTTP adapters retry
    /// internally) are the retryable class.
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport { .. })
    }
}

/// Free-text generation (hypothesis drafts and final answers).
pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, ProviderError>;
}

/// Dense text embedding; one unit vector per input, order-preserving.
pub trait TextEmbedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;

    /// Identifies the model/configuration so cached indexes can be matched
    /// against the embedder that produced them.
    fn tag(&self) -> String;
}

/// Query/document relevance scoring; higher means more relevant.
pub trait PairScorer: Send + Sync {
    fn score_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ProviderError>;

    fn score_pair(&self, query: &str, document: &str) -> Result<f64, ProviderError> {
        Ok(self.score_pairs(&[(query.to_string(), document.to_string())])?[0])
    }
}

/// Named-entity recognition over raw text.
pub trait EntityRecognizer: Send + Sync {
    fn recognize(&self, text: &str) -> Result<Vec<RecognizedEntity>, ProviderError>;
}

/// Validate that a batch of embeddings shares one dimension.
pub(crate) fn check_uniform_dim(vectors: &[EmbeddingVector]) -> Result<(), ProviderError> {
    if let Some(first) = vectors.first() {
        for v in vectors {
            if v.dim() != first.dim() {
                return Err(ProviderError::DimensionMismatch {
                    expected: first.dim(),
                    got: v.dim(),
                });
            }
        }
    }
    Ok(())
}

//! Deterministic provider doubles.
//!
//! Every double is a pure function of its inputs and configured seed, so
//! repeated calls agree exactly and full pipeline runs are reproducible
//! offline. Call counters make interaction-budget assertions cheap.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use super::{
    check_uniform_dim, EmbeddingVector, EntityRecognizer, GenerationParams, PairScorer,
    ProviderError, RecognizedEntity, TextEmbedder, TextGenerator,
};

fn prompt_key(prompt: &str) -> u64 {
    let digest = Sha256::digest(prompt.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Generator double that answers from a fixture table keyed by the prompt's
/// hash, falling back to a fixed string for unknown prompts.
pub struct ScriptedGenerator {
    responses: HashMap<u64, String>,
    fallback: String,
    calls: AtomicUsize,
}

impl ScriptedGenerator {
    pub fn new(fallback: impl Into<String>) -> Self {
        ScriptedGenerator {
            responses: HashMap::new(),
            fallback: fallback.into(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_response(mut self, prompt: &str, response: impl Into<String>) -> Self {
        self.responses.insert(prompt_key(prompt), response.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Default for ScriptedGenerator {
    fn default() -> Self {
        ScriptedGenerator::new("(no scripted completion for this prompt)")
    }
}

impl TextGenerator for ScriptedGenerator {
    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<String, ProviderError> {
        if prompt.is_empty() {
            return Err(ProviderError::EmptyInput("prompt"));
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self
            .responses
            .get(&prompt_key(prompt))
            .cloned()
            .unwrap_or_else(|| self.fallback.clone()))
    }
}

/// Embedder double: a pseudo-embedding derived from a seeded hash of the
/// text, expanded in counter mode and unit-normalized. Equal strings map to
/// equal vectors on every platform.
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    calls: AtomicUsize,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder {
            dim,
            seed,
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of `embed` calls (not texts) so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let mut base = Sha256::new();
        base.update(self.seed.to_le_bytes());
        base.update(text.as_bytes());
        let base = base.finalize();

        let mut raw = Vec::with_capacity(self.dim);
        let mut counter: u64 = 0;
        'outer: loop {
            let mut block = Sha256::new();
            block.update(base);
            block.update(counter.to_le_bytes());
            let bytes = block.finalize();
            for chunk in bytes.chunks_exact(4) {
                let u = u32::from_le_bytes(chunk.try_into().unwrap());
                // map to [-1, 1]
                raw.push((u as f64 / u32::MAX as f64 * 2.0 - 1.0) as f32);
                if raw.len() == self.dim {
                    break 'outer;
                }
            }
            counter += 1;
        }
        EmbeddingVector::from_raw(raw)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(64, 0)
    }
}

impl TextEmbedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut out = Vec::with_capacity(texts.len());
        for t in texts {
            if t.is_empty() {
                return Err(ProviderError::EmptyInput("text to embed"));
            }
            out.push(self.embed_one(t)?);
        }
        check_uniform_dim(&out)?;
        Ok(out)
    }

    fn tag(&self) -> String {
        format!("hash-embedder:d{}:s{}", self.dim, self.seed)
    }
}

/// Scorer double: the number of document tokens that also occur in the
/// query, divided by the document token count.
pub struct TokenOverlapScorer {
    calls: AtomicUsize,
}

impl TokenOverlapScorer {
    pub fn new() -> Self {
        TokenOverlapScorer {
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn score_one(query: &str, document: &str) -> f64 {
        let query_tokens: HashSet<&str> = query.split_whitespace().collect();
        let doc_tokens: Vec<&str> = document.split_whitespace().collect();
        if doc_tokens.is_empty() {
            return 0.0;
        }
        let overlap = doc_tokens
            .iter()
            .filter(|t| query_tokens.contains(**t))
            .count();
        overlap as f64 / doc_tokens.len() as f64
    }
}

impl Default for TokenOverlapScorer {
    fn default() -> Self {
        TokenOverlapScorer::new()
    }
}

impl PairScorer for TokenOverlapScorer {
    fn score_pairs(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(pairs
            .iter()
            .map(|(q, d)| Self::score_one(q, d))
            .collect())
    }
}

/// Recognizer double: every maximal dictionary match, longest-match and
/// left-to-right. A match is kept unless it lies strictly inside a longer
/// match; overlapping maximal matches are all reported.
pub struct GazetteerRecognizer {
    entries: HashSet<Vec<char>>,
    max_len: usize,
}

impl GazetteerRecognizer {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        let mut max_len = 0;
        for e in entries {
            let chars: Vec<char> = e.as_ref().chars().collect();
            if chars.is_empty() {
                continue;
            }
            max_len = max_len.max(chars.len());
            set.insert(chars);
        }
        GazetteerRecognizer {
            entries: set,
            max_len,
        }
    }
}

impl EntityRecognizer for GazetteerRecognizer {
    fn recognize(&self, text: &str) -> Result<Vec<RecognizedEntity>, ProviderError> {
        let chars: Vec<char> = text.chars().collect();
        let n = chars.len();
        if n == 0 || self.max_len == 0 {
            return Ok(Vec::new());
        }

        let mut matches: Vec<(usize, usize)> = Vec::new();
        for start in 0..n {
            let limit = self.max_len.min(n - start);
            for len in 1..=limit {
                if self.entries.contains(&chars[start..start + len]) {
                    matches.push((start, start + len));
                }
            }
        }

        // Keep only maximal spans.
        let maximal: Vec<(usize, usize)> = matches
            .iter()
            .copied()
            .filter(|&(s, e)| {
                !matches
                    .iter()
                    .any(|&(s2, e2)| (s2, e2) != (s, e) && s2 <= s && e <= e2)
            })
            .collect();

        let mut spans = maximal;
        spans.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        spans.dedup();
        Ok(spans
            .into_iter()
            .map(|(s, e)| RecognizedEntity {
                surface: chars[s..e].iter().collect(),
                start: s,
                end: e,
            })
            .collect())
    }
}

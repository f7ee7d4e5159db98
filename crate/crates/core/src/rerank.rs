//! Fragment-granularity-aware chain reranking.
//!
//! The query and hypothesis are stopword-filtered and chunked into
//! overlapping token windows; every chain is scored against every fragment
//! and the per-fragment scores are aggregated (max by default), so a chain
//! that strongly matches any single fragment survives pruning. The topK
//! highest-aggregate chains are kept.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chains::{serialize_chain, ChainSet, ReasoningChain};
use crate::extraction::{filter_tokens, Tokenizer};
use crate::kg::KnowledgeGraph;
use crate::providers::{PairScorer, ProviderError};

/// Scorer batch size for (fragment, chain) pairs.
const SCORE_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum RerankError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("chunking requires lc > oc, got lc={lc}, oc={oc}")]
    InvalidWindow { lc: usize, oc: usize },
    #[error("topK must be positive")]
    ZeroTopK,
    #[error("scorer returned {got} scores for {expected} pairs")]
    CountMismatch { expected: usize, got: usize },
}

/// Origin of a fragment's tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentSource {
    Query,
    HypothesisOutput,
    /// Whole-text fragment spanning both sources (whole-text rerank mode).
    Mixed,
}

/// One stopword-filtered sliding-window segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub text: String,
    /// Position in the combined fragment sequence (query fragments first).
    pub index: usize,
    pub source: FragmentSource,
}

/// How per-fragment scores combine into a chain score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

/// A chain with its aggregated rerank score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChain {
    pub chain: ReasoningChain,
    pub score: f64,
    /// Index of the best-scoring fragment.
    pub best_fragment: usize,
}

/// The pruned chain list: `min(topK, |input|)` chains, scores
/// non-increasing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrunedChains {
    pub chains: Vec<ScoredChain>,
}

impl PrunedChains {
    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }
}

/// Stopword-filter and chunk the query and hypothesis into token windows of
/// `lc` tokens with `oc` tokens of overlap. The two sources are chunked
/// independently so no fragment straddles the boundary; a final short
/// fragment covers any tokens the last full window missed.
pub fn chunk(
    query: &str,
    hypothesis: &str,
    lc: usize,
    oc: usize,
    stopwords: &HashSet<String>,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Fragment>, RerankError> {
    if lc == 0 || oc >= lc {
        return Err(RerankError::InvalidWindow { lc, oc });
    }
    let mut fragments = Vec::new();
    for (text, source) in [
        (query, FragmentSource::Query),
        (hypothesis, FragmentSource::HypothesisOutput),
    ] {
        if text.is_empty() {
            continue;
        }
        let tokens = filter_tokens(text, stopwords, tokenizer);
        for window in windows(tokens.len(), lc, oc) {
            let index = fragments.len();
            fragments.push(Fragment {
                text: tokens[window.0..window.1].join(" "),
                index,
                source,
            });
        }
    }
    Ok(fragments)
}

/// Half-open token windows `(start, end)` for `n` tokens: full windows at
/// stride `lc - oc`, plus a tail window if tokens remain uncovered.
fn windows(n: usize, lc: usize, oc: usize) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    if n <= lc {
        return vec![(0, n)];
    }
    let stride = lc - oc;
    let mut out = Vec::new();
    let mut offset = 0;
    while offset + lc <= n {
        out.push((offset, offset + lc));
        offset += stride;
    }
    if out.last().map(|w| w.1) != Some(n) {
        out.push((offset, n));
    }
    out
}

/// Closed-form fragment count for `n` tokens: full windows plus a tail
/// window when the stride leaves a remainder.
pub fn fragment_count(n: usize, lc: usize, oc: usize) -> usize {
    if n == 0 {
        return 0;
    }
    if n <= lc {
        return 1;
    }
    let stride = lc - oc;
    let full = (n - lc) / stride + 1;
    let tail = usize::from(!(n - lc).is_multiple_of(stride));
    full + tail
}

/// Score every chain against every fragment, aggregate, and keep the topK.
/// Chains are serialized without descriptions for scoring. When `fragments`
/// is empty the raw query stands in as a single fragment.
pub fn rerank(
    chains: &ChainSet,
    g: &KnowledgeGraph,
    fragments: &[Fragment],
    query: &str,
    scorer: &dyn PairScorer,
    top_k: usize,
    aggregation: Aggregation,
) -> Result<PrunedChains, RerankError> {
    if top_k == 0 {
        return Err(RerankError::ZeroTopK);
    }
    if chains.is_empty() {
        return Ok(PrunedChains::default());
    }

    let fallback;
    let fragments = if fragments.is_empty() {
        fallback = vec![Fragment {
            text: query.to_string(),
            index: 0,
            source: FragmentSource::Query,
        }];
        &fallback
    } else {
        fragments
    };

    let chain_texts: Vec<String> = chains
        .chains
        .iter()
        .map(|c| serialize_chain(c, g, false))
        .collect();

    // Chain-major score matrix, fetched in batches.
    let mut pairs = Vec::with_capacity(chain_texts.len() * fragments.len());
    for text in &chain_texts {
        for f in fragments {
            pairs.push((f.text.clone(), text.clone()));
        }
    }
    let mut scores = Vec::with_capacity(pairs.len());
    for batch in pairs.chunks(SCORE_BATCH) {
        let got = scorer.score_pairs(batch)?;
        if got.len() != batch.len() {
            return Err(RerankError::CountMismatch {
                expected: batch.len(),
                got: got.len(),
            });
        }
        scores.extend(got);
    }

    let per_fragment = fragments.len();
    let mut scored: Vec<ScoredChain> = chains
        .chains
        .iter()
        .enumerate()
        .map(|(i, chain)| {
            let row = &scores[i * per_fragment..(i + 1) * per_fragment];
            let mut best = 0usize;
            for (j, s) in row.iter().enumerate() {
                if *s > row[best] {
                    best = j;
                }
            }
            let score = match aggregation {
                Aggregation::Max => row[best],
                Aggregation::Mean => row.iter().sum::<f64>() / per_fragment as f64,
            };
            ScoredChain {
                chain: chain.clone(),
                score,
                best_fragment: best,
            }
        })
        .collect();

    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.chain.ordering_key().cmp(&b.chain.ordering_key()))
    });
    scored.truncate(top_k);
    Ok(PrunedChains { chains: scored })
}

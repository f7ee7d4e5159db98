//! Q&A evaluation: answer-letter extraction and the EM / PCR / ROUGE-recall
//! / BLEU metrics, plus dataset loading and report aggregation.
//!
//! Perplexity is deliberately not computed: it requires token
//! log-probabilities that the provider interfaces do not guarantee. The
//! report keeps a reserved slot for it that always reads as unavailable.

mod dataset;
mod report;

pub use dataset::{load_mcq_jsonl, load_openqa_jsonl, McqItem, OpenQaItem};
pub use report::{MetricAggregate, MetricReport, RunScores};

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::extraction::Tokenizer;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference text tokenizes to zero tokens")]
    EmptyReference,
    #[error("{path}:{line}: bad dataset record: {message}")]
    DatasetFormat {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Pull answer letters out of a model response: the first line holding any
/// allowed letter as a standalone option token wins. A token is a maximal
/// alphanumeric run; it counts as option letters only when every character
/// is an allowed letter, so `ABD` yields {A, B, D} while `cat` yields
/// nothing.
pub fn extract_choice_letters(response: &str, allowed: &BTreeSet<char>) -> BTreeSet<char> {
    for line in response.lines() {
        let mut found = BTreeSet::new();
        let mut token = String::new();
        for c in line.chars().chain(std::iter::once(' ')) {
            if c.is_alphanumeric() {
                token.push(c);
                continue;
            }
            if !token.is_empty() {
                if token.chars().all(|t| allowed.contains(&t)) {
                    found.extend(token.chars());
                }
                token.clear();
            }
        }
        if !found.is_empty() {
            return found;
        }
    }
    BTreeSet::new()
}

/// 1 iff the prediction equals the gold set exactly.
pub fn exact_match(pred: &BTreeSet<char>, gold: &BTreeSet<char>) -> u8 {
    u8::from(!gold.is_empty() && pred == gold)
}

/// 1 iff the prediction is a non-empty subset of gold: missing answers are
/// forgiven, incorrect ones are not.
pub fn partial_correct(pred: &BTreeSet<char>, gold: &BTreeSet<char>) -> u8 {
    u8::from(!gold.is_empty() && !pred.is_empty() && pred.is_subset(gold))
}

/// Unigram recall of the reference inside the response (ROUGE-1 recall),
/// over multiset token counts.
pub fn rouge_recall(
    response: &str,
    reference: &str,
    tokenizer: &dyn Tokenizer,
) -> Result<f64, EvalError> {
    let ref_tokens = tokenizer.tokenize(reference);
    if ref_tokens.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let resp_counts = counts(&tokenizer.tokenize(response));
    let ref_counts = counts(&ref_tokens);
    let matched: usize = ref_counts
        .iter()
        .map(|(t, c)| (*c).min(resp_counts.get(t).copied().unwrap_or(0)))
        .sum();
    Ok(matched as f64 / ref_tokens.len() as f64)
}

/// BLEU with uniform weights over n-grams up to `max_n`, clipped counts,
/// and the standard brevity penalty. No smoothing: a zero clipped count at
/// any order makes the score 0.
pub fn bleu(response: &str, reference: &str, max_n: usize, tokenizer: &dyn Tokenizer) -> f64 {
    debug_assert!(max_n == 1 || max_n == 4);
    let hyp = tokenizer.tokenize(response);
    let reference = tokenizer.tokenize(reference);
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        if hyp.len() < n {
            return 0.0;
        }
        let hyp_grams = counts(&ngrams(&hyp, n));
        let ref_grams = counts(&ngrams(&reference, n));
        let clipped: usize = hyp_grams
            .iter()
            .map(|(g, c)| (*c).min(ref_grams.get(g).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        let total = hyp.len() + 1 - n;
        log_sum += (clipped as f64 / total as f64).ln() / max_n as f64;
    }

    let brevity = if hyp.len() < reference.len() {
        (1.0 - reference.len() as f64 / hyp.len() as f64).exp()
    } else {
        1.0
    };
    brevity * log_sum.exp()
}

fn counts<T: std::hash::Hash + Eq + Clone>(items: &[T]) -> HashMap<T, usize> {
    let mut map = HashMap::new();
    for item in items {
        *map.entry(item.clone()).or_insert(0) += 1;
    }
    map
}

fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return Vec::new();
    }
    tokens.windows(n).map(|w| w.to_vec()).collect()
}

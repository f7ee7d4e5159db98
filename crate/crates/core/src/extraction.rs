//! Pre-retrieval text processing: tokenization, stopword filtering, and
//! entity extraction over the query and the hypothesis output.
//!
//! Only entity surfaces leave this module. The hypothesis text may assert
//! wrong relations between entities; those relations are deliberately
//! discarded here and re-derived from the graph during chain search.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::kg::KnowledgeGraph;
use crate::providers::{EntityRecognizer, ProviderError};

/// Turns text into a token stream. The contract is deliberately small so
/// language-specific segmenters can be swapped in.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Splits on Unicode whitespace; adequate for Latin-script tests.
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(|s| s.to_string()).collect()
    }
}

/// Greedy forward longest-match segmenter over a fixed dictionary, for
/// scripts without word boundaries. Runs of ASCII alphanumerics with no
/// dictionary match are kept whole; any other unmatched character becomes a
/// single-character token.
pub struct DictionarySegmenter {
    words: HashSet<Vec<char>>,
    max_word_chars: usize,
}

impl DictionarySegmenter {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        let mut max_word_chars = 0;
        for w in words {
            let chars: Vec<char> = w.as_ref().chars().collect();
            if chars.is_empty() {
                continue;
            }
            max_word_chars = max_word_chars.max(chars.len());
            set.insert(chars);
        }
        DictionarySegmenter {
            words: set,
            max_word_chars,
        }
    }

    /// Seed the dictionary from the graph's entity names.
    pub fn from_graph(g: &KnowledgeGraph) -> Self {
        Self::new(g.entities().iter().map(|e| e.name.as_str()))
    }
}

impl Tokenizer for DictionarySegmenter {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        for run in text.split_whitespace() {
            let chars: Vec<char> = run.chars().collect();
            let mut i = 0;
            while i < chars.len() {
                let limit = self.max_word_chars.min(chars.len() - i);
                let mut matched = 0;
                for len in (1..=limit).rev() {
                    if self.words.contains(&chars[i..i + len]) {
                        matched = len;
                        break;
                    }
                }
                if matched > 0 {
                    tokens.push(chars[i..i + matched].iter().collect());
                    i += matched;
                } else if chars[i].is_ascii_alphanumeric() {
                    let mut j = i + 1;
                    while j < chars.len() && chars[j].is_ascii_alphanumeric() {
                        j += 1;
                    }
                    tokens.push(chars[i..j].iter().collect());
                    i = j;
                } else {
                    tokens.push(chars[i].to_string());
                    i += 1;
                }
            }
        }
        tokens
    }
}

/// Tokenize, then drop stopwords and tokens with no alphanumeric content.
pub fn filter_tokens(
    text: &str,
    stopwords: &HashSet<String>,
    tokenizer: &dyn Tokenizer,
) -> Vec<String> {
    tokenizer
        .tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(|c| c.is_alphanumeric()))
        .filter(|t| !stopwords.contains(t) && !stopwords.contains(&t.to_lowercase()))
        .collect()
}

/// Stopword-filtered text, remaining tokens re-joined with single spaces.
pub fn filter_stopwords(
    text: &str,
    stopwords: &HashSet<String>,
    tokenizer: &dyn Tokenizer,
) -> String {
    filter_tokens(text, stopwords, tokenizer).join(" ")
}

/// Deduplicated entity mentions extracted from the query and hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    /// Normalized mentions in first-seen order (query first), no duplicates.
    pub mentions: Vec<String>,
    /// Unique mentions found in the query.
    pub query_mentions: usize,
    /// Unique mentions found in the hypothesis output.
    pub hypothesis_mentions: usize,
}

impl ExtractionResult {
    pub fn source_counts(&self) -> (usize, usize) {
        (self.query_mentions, self.hypothesis_mentions)
    }
}

/// NFC + trim + case-fold, the dedup key for mentions.
fn normalize_mention(surface: &str) -> String {
    surface
        .nfc()
        .collect::<String>()
        .trim()
        .to_lowercase()
}

/// Run the recognizer over the query and the hypothesis separately and
/// union the surfaces. Two calls keep offsets meaningful and make source
/// attribution exact; an empty hypothesis reduces to query-only extraction.
pub fn extract_entities(
    query: &str,
    hypothesis: &str,
    recognizer: &dyn EntityRecognizer,
) -> Result<ExtractionResult, ProviderError> {
    let mut mentions = Vec::new();
    let mut seen = HashSet::new();
    let mut per_source = [0usize; 2];

    for (slot, text) in [query, hypothesis].into_iter().enumerate() {
        if text.is_empty() {
            continue;
        }
        let mut source_seen = HashSet::new();
        for span in recognizer.recognize(text)? {
            let norm = normalize_mention(&span.surface);
            if norm.is_empty() {
                continue;
            }
            if source_seen.insert(norm.clone()) {
                per_source[slot] += 1;
            }
            if seen.insert(norm.clone()) {
                mentions.push(norm);
            }
        }
    }

    Ok(ExtractionResult {
        mentions,
        query_mentions: per_source[0],
        hypothesis_mentions: per_source[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::doubles::GazetteerRecognizer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stopset(words: &[&str]) -> HashSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn filter_drops_stopwords() {
        let out = filter_stopwords(
            "the patient has fever",
            &stopset(&["the", "has"]),
            &WhitespaceTokenizer,
        );
        assert_eq!(out, "patient fever");
    }

    #[test]
    fn filter_empty_text() {
        assert_eq!(
            filter_stopwords("", &stopset(&["the"]), &WhitespaceTokenizer),
            ""
        );
    }

    #[test]
    fn filter_drops_punctuation_only_tokens() {
        let out = filter_stopwords("fever -- ! chills", &stopset(&[]), &WhitespaceTokenizer);
        assert_eq!(out, "fever chills");
    }

    /// 100 tokens with 30 injected stopwords leaves 70, recounted
    /// independently.
    #[test]
    fn filter_count_matches_independent_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tokens = Vec::new();
        for i in 0..100 {
            if tokens.iter().filter(|t: &&String| t.starts_with("stop")).count() < 30
                && rng.gen_bool(0.35)
            {
                tokens.push(format!("stop{}", i % 3));
            } else {
                tokens.push(format!("word{i}"));
            }
        }
        while tokens.iter().filter(|t| t.starts_with("stop")).count() < 30 {
            tokens.push("stop0".to_string());
            tokens.remove(0);
        }
        let text = tokens.join(" ");
        let stop = stopset(&["stop0", "stop1", "stop2"]);
        let expected = tokens.iter().filter(|t| !t.starts_with("stop")).count();
        let filtered = filter_tokens(&text, &stop, &WhitespaceTokenizer);
        assert_eq!(filtered.len(), expected);
    }

    #[test]
    fn dictionary_segmenter_greedy_longest_match() {
        let seg = DictionarySegmenter::new(["胃食管反流", "胃", "反流"]);
        assert_eq!(
            seg.tokenize("胃食管反流很难受"),
            vec!["胃食管反流", "很", "难", "受"]
        );
        // ASCII runs without a match stay whole.
        assert_eq!(seg.tokenize("吃aspirin吗"), vec!["吃", "aspirin", "吗"]);
    }

    #[test]
    fn extraction_unions_and_dedups() {
        let rec = GazetteerRecognizer::new(["stomach reflux", "proton pump inhibitors"]);
        let result = extract_entities(
            "I have stomach reflux",
            "stomach reflux responds to proton pump inhibitors",
            &rec,
        )
        .unwrap();
        assert_eq!(result.mentions.len(), 2);
        assert_eq!(result.source_counts(), (1, 2));
    }

    #[test]
    fn empty_hypothesis_is_query_only() {
        let rec = GazetteerRecognizer::new(["fever"]);
        let result = extract_entities("fever again", "", &rec).unwrap();
        assert_eq!(result.mentions, vec!["fever"]);
        assert_eq!(result.source_counts(), (1, 0));
    }

    #[test]
    fn extraction_normalizes_case_for_dedup() {
        let rec = GazetteerRecognizer::new(["Fever", "fever"]);
        let result = extract_entities("Fever", "fever", &rec).unwrap();
        assert_eq!(result.mentions, vec!["fever"]);
    }

    /// Output mentions are always a subset of recognizer spans, so no
    /// relation text from the hypothesis can leak into retrieval.
    #[test]
    fn only_recognizer_surfaces_survive() {
        let rec = GazetteerRecognizer::new(["fever", "aspirin"]);
        let query = "does aspirin lower fever";
        let hypothesis = "aspirin causes fever to drop";
        let result = extract_entities(query, hypothesis, &rec).unwrap();
        let allowed: HashSet<String> = ["fever", "aspirin"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for m in &result.mentions {
            assert!(allowed.contains(m), "unexpected mention {m}");
        }
    }

    /// Growing the hypothesis must never remove query-derived mentions.
    #[test]
    fn hypothesis_growth_is_monotone_for_query_mentions() {
        let rec = GazetteerRecognizer::new(["fever", "aspirin", "chills"]);
        let query = "fever and chills";
        let base = extract_entities(query, "", &rec).unwrap();
        let grown = extract_entities(query, "aspirin treats fever", &rec).unwrap();
        for m in &base.mentions {
            assert!(grown.mentions.contains(m));
        }
    }

    #[test]
    fn extraction_is_idempotent() {
        let rec = GazetteerRecognizer::new(["fever", "aspirin"]);
        let a = extract_entities("fever", "aspirin", &rec).unwrap();
        let b = extract_entities("fever", "aspirin", &rec).unwrap();
        assert_eq!(a, b);
    }
}

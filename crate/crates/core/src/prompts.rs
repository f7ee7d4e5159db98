//! Prompt templates for the hypothesis draft and the reader call.
//!
//! Both templates are pinned byte-for-byte by golden tests. User text is
//! injected verbatim: placeholder substitution happens in a single pass
//! over the template, so placeholder-looking sequences inside the query can
//! never be re-expanded.

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use crate::kg::KnowledgeGraph;
use crate::rerank::PrunedChains;

pub const USER_QUERY_SLOT: &str = "{user_query}";
pub const BACKGROUND_SLOT: &str = "{background_knowledge}";

/// Hypothesis-draft prompt: asks for an exploratory passage answering the
/// query.
pub const HO_TEMPLATE: &str = "\
### Task Description:
You are a medical expert. Please write a passage to answer [User Query] while adhering to [Answer Requirements].

### Answer Requirements:
1) Please take time to think slowly, understand step by step, and answer questions. Do not skip key steps.
2) Fully analyze the problem through thinking and exploratory analysis.

### {{ User Query }}
{user_query}";

/// Reader prompt: grounds the final answer in the retrieved chains.
pub const READER_TEMPLATE: &str = "\
### Task Description:
You are a medical expert. Based on relevant medical [Background Knowledge] and your medical knowledge, provide professional medical advice for [User Query] while adhering to [Answer Requirements].

### Answer Requirements:
1) Take time to think slowly, understand step by step, and answer questions.
2) Clearly state key information in the answer and provide direct and specific answers to user questions.

### {{ Background Knowledge }}
The retrieved knowledge chains are:{background_knowledge}

### {{ User Query }}
{user_query}";

/// Shown in the background section when retrieval produced nothing.
pub const EMPTY_RETRIEVAL_SENTINEL: &str = " (none)";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("query must not be empty")]
    EmptyQuery,
    #[error("template is missing required placeholder {0}")]
    MissingPlaceholder(&'static str),
    #[error("could not read template override {path}: {source}")]
    TemplateRead {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The pair of templates in use; defaults to the built-in English ones,
/// with optional whole-template overrides from a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    ho: String,
    reader: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            ho: HO_TEMPLATE.to_string(),
            reader: READER_TEMPLATE.to_string(),
        }
    }
}

impl PromptSet {
    /// Load overrides from a directory: `ho_prompt.txt` and/or
    /// `reader_prompt.txt`, each a UTF-8 template with the named
    /// placeholders. Missing files keep the built-in template.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = PromptSet::default();
        let ho_path = dir.join("ho_prompt.txt");
        if ho_path.exists() {
            set.ho = read_template(&ho_path)?;
        }
        let reader_path = dir.join("reader_prompt.txt");
        if reader_path.exists() {
            set.reader = read_template(&reader_path)?;
        }
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<(), PromptError> {
        if !self.ho.contains(USER_QUERY_SLOT) {
            return Err(PromptError::MissingPlaceholder(USER_QUERY_SLOT));
        }
        if !self.reader.contains(USER_QUERY_SLOT) {
            return Err(PromptError::MissingPlaceholder(USER_QUERY_SLOT));
        }
        if !self.reader.contains(BACKGROUND_SLOT) {
            return Err(PromptError::MissingPlaceholder(BACKGROUND_SLOT));
        }
        Ok(())
    }

    pub fn render_ho(&self, query: &str) -> Result<String, PromptError> {
        if query.is_empty() {
            return Err(PromptError::EmptyQuery);
        }
        Ok(substitute(&self.ho, &[(USER_QUERY_SLOT, query)]))
    }

    /// Render the reader prompt from pre-serialized background lines, one
    /// chain (or anchor description) per line.
    pub fn render_reader_from_lines(
        &self,
        query: &str,
        lines: &[String],
    ) -> Result<String, PromptError> {
        if query.is_empty() {
            return Err(PromptError::EmptyQuery);
        }
        let background = if lines.is_empty() {
            EMPTY_RETRIEVAL_SENTINEL.to_string()
        } else {
            let mut s = String::new();
            for line in lines {
                s.push('\n');
                s.push_str(line);
            }
            s
        };
        Ok(substitute(
            &self.reader,
            &[(USER_QUERY_SLOT, query), (BACKGROUND_SLOT, &background)],
        ))
    }
}

fn read_template(path: &Path) -> Result<String, PromptError> {
    std::fs::read_to_string(path).map_err(|source| PromptError::TemplateRead {
        path: path.display().to_string(),
        source,
    })
}

/// Single-pass placeholder substitution: the template is scanned once and
/// replacement text is copied through without re-scanning.
fn substitute(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    'outer: while !rest.is_empty() {
        let mut earliest: Option<(usize, &str, &str)> = None;
        for (slot, value) in slots {
            if let Some(pos) = rest.find(slot) {
                if earliest.map(|(p, _, _)| pos < p).unwrap_or(true) {
                    earliest = Some((pos, slot, value));
                }
            }
        }
        match earliest {
            Some((pos, slot, value)) => {
                out.push_str(&rest[..pos]);
                out.push_str(value);
                rest = &rest[pos + slot.len()..];
            }
            None => {
                out.push_str(rest);
                break 'outer;
            }
        }
    }
    out
}

/// Render the hypothesis prompt with the default templates.
pub fn render_ho_prompt(query: &str) -> Result<String, PromptError> {
    PromptSet::default().render_ho(query)
}

/// Serialize the pruned chains (with endpoint descriptions, one per line,
/// each terminated with a period) into the reader template.
pub fn render_reader_prompt(
    query: &str,
    chains: &PrunedChains,
    g: &KnowledgeGraph,
) -> Result<String, PromptError> {
    let lines = chain_lines(chains, g, true);
    PromptSet::default().render_reader_from_lines(query, &lines)
}

/// Background lines for a pruned chain set, in score order.
pub fn chain_lines(chains: &PrunedChains, g: &KnowledgeGraph, with_descriptions: bool) -> Vec<String> {
    chains
        .chains
        .iter()
        .map(|sc| {
            let mut line = crate::chains::serialize_chain(&sc.chain, g, with_descriptions);
            line.push('.');
            line
        })
        .collect()
}

/// Background lines for the chains-disabled mode: the anchors' own
/// descriptions.
pub fn anchor_lines(
    anchors: &[crate::kg::EntityId],
    g: &KnowledgeGraph,
    with_descriptions: bool,
) -> Vec<String> {
    let mut seen = HashSet::new();
    anchors
        .iter()
        .filter(|id| seen.insert(**id))
        .map(|id| {
            let name = g.entity_name(*id);
            let description = if with_descriptions {
                g.entity(*id).ok().and_then(|e| e.display_description())
            } else {
                None
            };
            match description {
                Some(d) => format!("{name}: {d}."),
                None => format!("{name}."),
            }
        })
        .collect()
}

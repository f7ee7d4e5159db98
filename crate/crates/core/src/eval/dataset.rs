//! JSON-lines dataset loaders for multiple-choice and open-domain items.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: String,
    pub question: String,
    /// Option letter → option text.
    pub options: BTreeMap<char, String>,
    /// Gold answer letters; non-empty, subset of the option letters.
    pub gold: BTreeSet<char>,
}

impl McqItem {
    pub fn allowed_letters(&self) -> BTreeSet<char> {
        self.options.keys().copied().collect()
    }

    /// The question with its options, as sent to the pipeline.
    pub fn as_query_text(&self) -> String {
        let mut s = self.question.clone();
        for (letter, text) in &self.options {
            s.push('\n');
            s.push(*letter);
            s.push_str(". ");
            s.push_str(text);
        }
        s
    }
}

/// One open-domain item with a reference answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenQaItem {
    pub id: String,
    pub context: String,
    pub question: String,
    pub reference: String,
}

impl OpenQaItem {
    pub fn as_query_text(&self) -> String {
        if self.context.is_empty() {
            self.question.clone()
        } else {
            format!("{}\n{}", self.context, self.question)
        }
    }
}

#[derive(Deserialize)]
struct McqLine {
    id: serde_json::Value,
    question: String,
    options: BTreeMap<String, String>,
    answer: String,
}

#[derive(Deserialize)]
struct OpenQaLine {
    id: serde_json::Value,
    #[serde(default)]
    context: String,
    question: String,
    reference: String,
}

fn id_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn load_mcq_jsonl(path: &Path) -> Result<Vec<McqItem>, EvalError> {
    let mut items = Vec::new();
    for (line_no, text) in read_lines(path)? {
        let parsed: McqLine =
            serde_json::from_str(&text).map_err(|e| EvalError::DatasetFormat {
                path: path.display().to_string(),
                line: line_no,
                message: e.to_string(),
            })?;
        let mut options = BTreeMap::new();
        for (k, v) in parsed.options {
            let mut chars = k.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => options.insert(c, v),
                _ => {
                    return Err(EvalError::DatasetFormat {
                        path: path.display().to_string(),
                        line: line_no,
                        message: format!("option key {k:?} is not a single letter"),
                    })
                }
            };
        }
        let gold: BTreeSet<char> = parsed.answer.chars().filter(|c| !c.is_whitespace()).collect();
        if gold.is_empty() || !gold.iter().all(|c| options.contains_key(c)) {
            return Err(EvalError::DatasetFormat {
                path: path.display().to_string(),
                line: line_no,
                message: format!("answer {:?} is not a non-empty subset of options", parsed.answer),
            });
        }
        items.push(McqItem {
            id: id_string(&parsed.id),
            question: parsed.question,
            options,
            gold,
        });
    }
    Ok(items)
}

pub fn load_openqa_jsonl(path: &Path) -> Result<Vec<OpenQaItem>, EvalError> {
    let mut items = Vec::new();
    for (line_no, text) in read_lines(path)? {
        let parsed: OpenQaLine =
            serde_json::from_str(&text).map_err(|e| EvalError::DatasetFormat {
                path: path.display().to_string(),
                line: line_no,
                message: e.to_string(),
            })?;
        if parsed.reference.trim().is_empty() {
            return Err(EvalError::DatasetFormat {
                path: path.display().to_string(),
                line: line_no,
                message: "reference answer is empty".to_string(),
            });
        }
        items.push(OpenQaItem {
            id: id_string(&parsed.id),
            context: parsed.context,
            question: parsed.question,
            reference: parsed.reference,
        });
    }
    Ok(items)
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, EvalError> {
    let file = File::open(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let text = line.map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        out.push((i + 1, text));
    }
    Ok(out)
}

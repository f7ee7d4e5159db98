//! Graph ingestion from entity and triple streams.
//!
//! Entities arrive as JSON-lines records (`name` required, `description` and
//! `type` optional); triples arrive either as JSON-lines with
//! `head`/`relation`/`tail` keys or as 3-column TSV in that order. All text
//! is NFC-normalized on load. Ingestion is deterministic (first-seen id
//! interning) and idempotent: re-reading the same lines changes nothing.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{normalize_name, EntityId, EntityRecord, KgError, KnowledgeGraph, RelationId, Triplet};

/// One entity record as read from the entity stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityInput {
    pub name: String,
    pub description: Option<String>,
    pub entity_type: Option<String>,
}

impl EntityInput {
    pub fn new(name: impl Into<String>) -> Self {
        EntityInput {
            name: name.into(),
            description: None,
            entity_type: None,
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn with_type(mut self, entity_type: impl Into<String>) -> Self {
        self.entity_type = Some(entity_type.into());
        self
    }
}

/// One (head-name, relation-name, tail-name) triple as read from the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleInput {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl TripleInput {
    pub fn new(
        head: impl Into<String>,
        relation: impl Into<String>,
        tail: impl Into<String>,
    ) -> Self {
        TripleInput {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Create an entity with an empty description when a triple endpoint
    /// does not resolve. Off by default so dirty data surfaces as errors.
    pub auto_create_entities: bool,
}

/// Incremental builder behind [`ingest`]; single-writer by construction.
pub struct GraphBuilder {
    opts: IngestOptions,
    entities: Vec<EntityRecord>,
    /// Exact-record dedup so re-reading a file is a no-op.
    record_keys: HashMap<(String, Option<String>, Option<String>), EntityId>,
    /// Lowest id per name, for endpoint resolution.
    by_name: HashMap<String, EntityId>,
    relations: Vec<String>,
    relation_ids: HashMap<String, RelationId>,
    triplets: HashSet<Triplet>,
}

impl GraphBuilder {
    pub fn new(opts: IngestOptions) -> Self {
        GraphBuilder {
            opts,
            entities: Vec::new(),
            record_keys: HashMap::new(),
            by_name: HashMap::new(),
            relations: Vec::new(),
            relation_ids: HashMap::new(),
            triplets: HashSet::new(),
        }
    }

    /// Add one entity record. `label`/`line` locate errors in the source.
    pub fn add_entity(
        &mut self,
        input: EntityInput,
        label: &str,
        line: usize,
    ) -> Result<EntityId, KgError> {
        let name = normalize_name(&input.name);
        if name.is_empty() {
            return Err(KgError::EmptyEntityName {
                label: label.to_string(),
                line,
            });
        }
        let key = (
            name.clone(),
            input.description.clone(),
            input.entity_type.clone(),
        );
        if let Some(&id) = self.record_keys.get(&key) {
            return Ok(id);
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(EntityRecord {
            id,
            name: name.clone(),
            description: input.description,
            entity_type: input.entity_type,
        });
        self.record_keys.insert(key, id);
        self.by_name.entry(name).or_insert(id);
        Ok(id)
    }

    pub fn add_triple(
        &mut self,
        input: TripleInput,
        label: &str,
        line: usize,
    ) -> Result<(), KgError> {
        let head = self.resolve_endpoint(&input.head, label, line)?;
        let tail = self.resolve_endpoint(&input.tail, label, line)?;
        let relation = normalize_name(&input.relation);
        if relation.is_empty() {
            return Err(KgError::MalformedLine {
                label: label.to_string(),
                line,
                message: "empty relation name".to_string(),
            });
        }
        let rel_id = match self.relation_ids.get(&relation) {
            Some(&id) => id,
            None => {
                let id = RelationId(self.relations.len() as u32);
                self.relations.push(relation.clone());
                self.relation_ids.insert(relation, id);
                id
            }
        };
        self.triplets.insert(Triplet {
            head,
            relation: rel_id,
            tail,
        });
        Ok(())
    }

    fn resolve_endpoint(
        &mut self,
        name: &str,
        label: &str,
        line: usize,
    ) -> Result<EntityId, KgError> {
        let name = normalize_name(name);
        if name.is_empty() {
            return Err(KgError::MalformedLine {
                label: label.to_string(),
                line,
                message: "empty entity name in triple".to_string(),
            });
        }
        if let Some(&id) = self.by_name.get(&name) {
            return Ok(id);
        }
        if !self.opts.auto_create_entities {
            return Err(KgError::UnknownEntity {
                label: label.to_string(),
                line,
                name,
            });
        }
        self.add_entity(EntityInput::new(name), label, line)
    }

    pub fn finish(self) -> KnowledgeGraph {
        KnowledgeGraph::from_parts(
            self.entities,
            self.relations,
            self.triplets.into_iter().collect(),
        )
    }
}

/// Build a graph from in-memory entity and triple records.
pub fn ingest(
    entities: &[EntityInput],
    triples: &[TripleInput],
    opts: &IngestOptions,
) -> Result<KnowledgeGraph, KgError> {
    let mut builder = GraphBuilder::new(opts.clone());
    for (i, e) in entities.iter().enumerate() {
        builder.add_entity(e.clone(), "entities", i + 1)?;
    }
    for (i, t) in triples.iter().enumerate() {
        builder.add_triple(t.clone(), "triples", i + 1)?;
    }
    Ok(builder.finish())
}

/// Build a graph by streaming an entities file and a triples file.
pub fn ingest_files(
    entities_path: &Path,
    triples_path: &Path,
    opts: &IngestOptions,
) -> Result<KnowledgeGraph, KgError> {
    let mut builder = GraphBuilder::new(opts.clone());

    let entities_label = path_label(entities_path);
    for_each_line(entities_path, |line, text| {
        let input = parse_entity_line(text, &entities_label, line)?;
        builder.add_entity(input, &entities_label, line)?;
        Ok(())
    })?;

    let triples_label = path_label(triples_path);
    let jsonl = sniff_jsonl(triples_path)?;
    for_each_line(triples_path, |line, text| {
        let input = if jsonl {
            parse_triple_jsonl(text, &triples_label, line)?
        } else {
            parse_triple_tsv(text, &triples_label, line)?
        };
        builder.add_triple(input, &triples_label, line)?;
        Ok(())
    })?;

    Ok(builder.finish())
}

/// Load a one-token-per-line UTF-8 stopword file.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>, KgError> {
    let mut set = HashSet::new();
    for_each_line(path, |_, text| {
        set.insert(normalize_name(text));
        Ok(())
    })?;
    Ok(set)
}

fn path_label(path: &Path) -> String {
    path.display().to_string()
}

fn for_each_line(
    path: &Path,
    mut f: impl FnMut(usize, &str) -> Result<(), KgError>,
) -> Result<(), KgError> {
    let file = File::open(path).map_err(|source| KgError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|source| KgError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        f(line_no, &text)?;
    }
    Ok(())
}

/// Triples files are JSONL when the first non-empty line starts with `{`,
/// otherwise 3-column TSV.
fn sniff_jsonl(path: &Path) -> Result<bool, KgError> {
    let file = File::open(path).map_err(|source| KgError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    for line in reader.lines() {
        let text = line.map_err(|source| KgError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = text.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        return Ok(trimmed.starts_with('{'));
    }
    Ok(false)
}

#[derive(Deserialize)]
struct EntityLine {
    name: String,
    #[serde(default)]
    description: Option<String>,
    #[serde(default, rename = "type")]
    entity_type: Option<String>,
}

fn parse_entity_line(text: &str, label: &str, line: usize) -> Result<EntityInput, KgError> {
    let parsed: EntityLine =
        serde_json::from_str(text).map_err(|e| KgError::MalformedLine {
            label: label.to_string(),
            line,
            message: e.to_string(),
        })?;
    Ok(EntityInput {
        name: parsed.name,
        description: parsed.description,
        entity_type: parsed.entity_type,
    })
}

#[derive(Deserialize)]
struct TripleLine {
    head: String,
    relation: String,
    tail: String,
}

fn parse_triple_jsonl(text: &str, label: &str, line: usize) -> Result<TripleInput, KgError> {
    let parsed: TripleLine =
        serde_json::from_str(text).map_err(|e| KgError::MalformedLine {
            label: label.to_string(),
            line,
            message: e.to_string(),
        })?;
    Ok(TripleInput {
        head: parsed.head,
        relation: parsed.relation,
        tail: parsed.tail,
    })
}

fn parse_triple_tsv(text: &str, label: &str, line: usize) -> Result<TripleInput, KgError> {
    let mut cols = text.split('\t');
    let head = cols.next().unwrap_or("");
    let relation = cols.next();
    let tail = cols.next();
    match (relation, tail) {
        (Some(r), Some(t)) => Ok(TripleInput::new(head, r, t)),
        _ => Err(KgError::MalformedLine {
            label: label.to_string(),
            line,
            message: format!(
                "expected 3 tab-separated columns, found {}",
                text.split('\t').count()
            ),
        }),
    }
}

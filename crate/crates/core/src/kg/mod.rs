//! Immutable knowledge-graph storage.
//!
//! A [`KnowledgeGraph`] is built once by [`ingest`] (or loaded from a binary
//! snapshot) and never mutated afterwards: entities and relations are
//! interned as dense integer ids in first-seen order, triplets are
//! deduplicated, and forward/reverse adjacency indexes are materialized for
//! traversal. After construction the graph is safe to share across any
//! number of reader threads.

mod ingest;
mod snapshot;

pub use ingest::{
    ingest, ingest_files, load_stopwords, EntityInput, GraphBuilder, IngestOptions, TripleInput,
};
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Dense, contiguous entity index, stable within one loaded graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Dense, contiguous relation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One entity with its name and (optional) encyclopedia-style description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: EntityId,
    /// Non-empty after NFC normalization and trimming.
    pub name: String,
    pub description: Option<String>,
    /// Free-form type label; carried as metadata and appended to the
    /// serialized description, never used algorithmically.
    pub entity_type: Option<String>,
}

impl EntityRecord {
    /// Description text as it should appear in prompts: the raw description
    /// with the type label appended in parentheses when both are present.
    pub fn display_description(&self) -> Option<String> {
        match (&self.description, &self.entity_type) {
            (Some(d), Some(t)) => Some(format!("{d} ({t})")),
            (Some(d), None) => Some(d.clone()),
            (None, _) => None,
        }
    }
}

/// A directed head-relation-tail fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Adjacency direction for [`KnowledgeGraph::neighbors`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Outgoing edges: `(v, r, u)` gives `(r, u)` at `v`.
    Forward,
    /// Incoming edges: `(v, r, u)` gives `(r, v)` at `u`.
    Reverse,
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{label}:{line}: malformed line: {message}")]
    MalformedLine {
        label: String,
        line: usize,
        message: String,
    },
    #[error("{label}:{line}: entity name is empty after trimming")]
    EmptyEntityName { label: String, line: usize },
    #[error("{label}:{line}: triple references unknown entity '{name}' and auto-creation is disabled")]
    UnknownEntity {
        label: String,
        line: usize,
        name: String,
    },
    #[error("entity id {0} out of range (graph has {1} entities)")]
    InvalidEntityId(u32, usize),
    #[error("snapshot format error: {0}")]
    Snapshot(String),
    #[error("snapshot version {found} not supported (expected {expected})")]
    SnapshotVersion { found: u8, expected: u8 },
}

/// NFC-normalize and trim a name or query string.
pub fn normalize_name(raw: &str) -> String {
    raw.nfc().collect::<String>().trim().to_string()
}

/// Immutable entity/relation/triplet store with adjacency indexes.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entities: Vec<EntityRecord>,
    relations: Vec<String>,
    /// Deduplicated, sorted by (head, relation, tail).
    triplets: Vec<Triplet>,
    /// `forward_adj[v] = sorted {(r, u) | (v, r, u) in triplets}`.
    forward_adj: Vec<Vec<(RelationId, EntityId)>>,
    /// `reverse_adj[u] = sorted {(r, v) | (v, r, u) in triplets}`.
    reverse_adj: Vec<Vec<(RelationId, EntityId)>>,
    /// Lowest id per normalized name.
    name_index: HashMap<String, EntityId>,
    /// Content hash over entities, relations, and triplets.
    graph_hash: String,
}

impl KnowledgeGraph {
    pub(crate) fn from_parts(
        entities: Vec<EntityRecord>,
        relations: Vec<String>,
        mut triplets: Vec<Triplet>,
    ) -> Self {
        triplets.sort_unstable();
        triplets.dedup();

        let n = entities.len();
        let mut forward_adj: Vec<Vec<(RelationId, EntityId)>> = vec![Vec::new(); n];
        let mut reverse_adj: Vec<Vec<(RelationId, EntityId)>> = vec![Vec::new(); n];
        for t in &triplets {
            forward_adj[t.head.index()].push((t.relation, t.tail));
            reverse_adj[t.tail.index()].push((t.relation, t.head));
        }
        for list in forward_adj.iter_mut().chain(reverse_adj.iter_mut()) {
            list.sort_unstable();
        }

        let mut name_index = HashMap::with_capacity(n);
        for e in &entities {
            name_index.entry(e.name.clone()).or_insert(e.id);
        }

        let graph_hash = hash_graph(&entities, &relations, &triplets);
        KnowledgeGraph {
            entities,
            relations,
            triplets,
            forward_adj,
            reverse_adj,
            name_index,
            graph_hash,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn triplet_count(&self) -> usize {
        self.triplets.len()
    }

    pub fn entities(&self) -> &[EntityRecord] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn entity(&self, id: EntityId) -> Result<&EntityRecord, KgError> {
        self.entities
            .get(id.index())
            .ok_or(KgError::InvalidEntityId(id.0, self.entities.len()))
    }

    /// Entity name, or a placeholder for an out-of-range id.
    pub fn entity_name(&self, id: EntityId) -> &str {
        self.entities
            .get(id.index())
            .map(|e| e.name.as_str())
            .unwrap_or("<unknown entity>")
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.relations
            .get(id.index())
            .map(|s| s.as_str())
            .unwrap_or("<unknown relation>")
    }

    /// Adjacency list for `v`, in sorted `(relation, entity)` order.
    pub fn neighbors(
        &self,
        v: EntityId,
        direction: Direction,
    ) -> Result<&[(RelationId, EntityId)], KgError> {
        let lists = match direction {
            Direction::Forward => &self.forward_adj,
            Direction::Reverse => &self.reverse_adj,
        };
        lists
            .get(v.index())
            .map(|l| l.as_slice())
            .ok_or(KgError::InvalidEntityId(v.0, self.entities.len()))
    }

    /// Exact-name lookup after NFC normalization and trimming. Returns the
    /// lowest id when several entities share the name.
    pub fn lookup_by_name(&self, name: &str) -> Option<EntityId> {
        self.name_index.get(&normalize_name(name)).copied()
    }

    pub fn has_triplet(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.triplets
            .binary_search(&Triplet {
                head,
                relation,
                tail,
            })
            .is_ok()
    }

    /// Stable content hash; keys the entity-index cache.
    pub fn graph_hash(&self) -> &str {
        &self.graph_hash
    }
}

fn hash_graph(entities: &[EntityRecord], relations: &[String], triplets: &[Triplet]) -> String {
    let mut h = Sha256::new();
    h.update((entities.len() as u64).to_le_bytes());
    for e in entities {
        h.update((e.name.len() as u64).to_le_bytes());
        h.update(e.name.as_bytes());
        for opt in [&e.description, &e.entity_type] {
            match opt {
                Some(s) => {
                    h.update([1u8]);
                    h.update((s.len() as u64).to_le_bytes());
                    h.update(s.as_bytes());
                }
                None => h.update([0u8]),
            }
        }
    }
    h.update((relations.len() as u64).to_le_bytes());
    for r in relations {
        h.update((r.len() as u64).to_le_bytes());
        h.update(r.as_bytes());
    }
    h.update((triplets.len() as u64).to_le_bytes());
    for t in triplets {
        h.update(t.head.0.to_le_bytes());
        h.update(t.relation.0.to_le_bytes());
        h.update(t.tail.0.to_le_bytes());
    }
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

//! Embedding alignment: link extracted mentions to graph anchors.
//!
//! All entity names are pre-embedded into an [`EntityIndex`] (one unit
//! vector per entity, in id order), which can be persisted to a disk cache
//! keyed by graph hash and embedder tag. Linking computes exact exhaustive
//! inner-product similarity for each mention and keeps the argmax entity
//! when it strictly exceeds the threshold.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph};
use crate::providers::{EmbeddingVector, ProviderError, TextEmbedder};

/// How many entity names to send per embed call while building the index.
const BUILD_BATCH: usize = 512;

const CACHE_FORMAT: &str = "hykge-entity-index";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LinkerError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("index cache format error: {0}")]
    CacheFormat(String),
    #[error("index was built by '{index_tag}' but the embedder is '{embedder_tag}'")]
    TagMismatch {
        index_tag: String,
        embedder_tag: String,
    },
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("embedder returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
}

/// Pre-embedded entity-name matrix: row `i` is the unit vector for entity
/// `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityIndex {
    matrix: Vec<f32>,
    dim: usize,
    count: usize,
    provider_tag: String,
    graph_hash: String,
}

impl EntityIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn graph_hash(&self) -> &str {
        &self.graph_hash
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    /// Inner product between a query vector and row `i`.
    pub fn similarity(&self, query: &EmbeddingVector, i: usize) -> f64 {
        query
            .values()
            .iter()
            .zip(self.row(i))
            .map(|(a, b)| *a as f64 * *b as f64)
            .sum()
    }
}

/// Embed every entity name in id order.
pub fn build_index(
    g: &KnowledgeGraph,
    embedder: &dyn TextEmbedder,
) -> Result<EntityIndex, LinkerError> {
    let names: Vec<String> = g.entities().iter().map(|e| e.name.clone()).collect();
    let mut matrix = Vec::new();
    let mut dim = 0usize;
    for batch in names.chunks(BUILD_BATCH) {
        let vectors = embedder.embed(batch)?;
        if vectors.len() != batch.len() {
            return Err(LinkerError::CountMismatch {
                expected: batch.len(),
                got: vectors.len(),
            });
        }
        for v in &vectors {
            if dim == 0 {
                dim = v.dim();
                matrix.reserve(dim * names.len());
            } else if v.dim() != dim {
                return Err(LinkerError::Provider(ProviderError::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                }));
            }
            matrix.extend_from_slice(v.values());
        }
    }
    Ok(EntityIndex {
        matrix,
        dim,
        count: names.len(),
        provider_tag: embedder.tag(),
        graph_hash: g.graph_hash().to_string(),
    })
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
    dim: usize,
    count: usize,
    provider_tag: String,
    graph_hash: String,
}

/// Persist an index: one JSON header line, then `count * dim` little-endian
/// f32 values. The same index always serializes to the same bytes.
pub fn save_index(index: &EntityIndex, path: &Path) -> Result<(), LinkerError> {
    let io_err = |source| LinkerError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let header = CacheHeader {
        format: CACHE_FORMAT.to_string(),
        version: CACHE_VERSION,
        dim: index.dim,
        count: index.count,
        provider_tag: index.provider_tag.clone(),
        graph_hash: index.graph_hash.clone(),
    };
    let mut line = serde_json::to_vec(&header)
        .map_err(|e| LinkerError::CacheFormat(e.to_string()))?;
    line.push(b'\n');
    w.write_all(&line).map_err(|source| LinkerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut bytes = Vec::with_capacity(index.matrix.len() * 4);
    for v in &index.matrix {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes).map_err(|source| LinkerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_index(path: &Path) -> Result<EntityIndex, LinkerError> {
    let io_err = |source| LinkerError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut r = BufReader::new(file);
    let mut header_line = String::new();
    r.read_line(&mut header_line).map_err(|source| LinkerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let header: CacheHeader = serde_json::from_str(header_line.trim_end())
        .map_err(|e| LinkerError::CacheFormat(e.to_string()))?;
    if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
        return Err(LinkerError::CacheFormat(format!(
            "unsupported cache {}/{}",
            header.format, header.version
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|source| LinkerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let expected = header.count * header.dim * 4;
    if bytes.len() != expected {
        return Err(LinkerError::CacheFormat(format!(
            "expected {expected} matrix bytes, found {}",
            bytes.len()
        )));
    }
    let matrix: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(EntityIndex {
        matrix,
        dim: header.dim,
        count: header.count,
        provider_tag: header.provider_tag,
        graph_hash: header.graph_hash,
    })
}

/// Load a cached index when it matches the graph and embedder; otherwise
/// (missing, stale hash, different embedder, or dimension drift) rebuild
/// and rewrite the cache. Returns the index and whether it was rebuilt.
pub fn load_or_build(
    path: &Path,
    g: &KnowledgeGraph,
    embedder: &dyn TextEmbedder,
) -> Result<(EntityIndex, bool), LinkerError> {
    if path.exists() {
        if let Ok(index) = load_index(path) {
            if index.graph_hash == g.graph_hash()
                && index.provider_tag == embedder.tag()
                && index.count == g.entity_count()
            {
                return Ok((index, false));
            }
        }
    }
    let index = build_index(g, embedder)?;
    save_index(&index, path)?;
    Ok((index, true))
}

/// Provenance for one linked anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorProvenance {
    pub entity: EntityId,
    pub mention: String,
    pub similarity: f64,
}

/// A mention that failed to link, kept for the provenance log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlinkedMention {
    pub mention: String,
    pub best_similarity: f64,
    pub best_entity: Option<EntityId>,
}

/// The matched anchor entities, deduplicated, with per-anchor provenance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnchorSet {
    /// Distinct anchor ids in first-linked order.
    pub anchors: Vec<EntityId>,
    /// One entry per anchor (same order): the best mention and similarity.
    pub provenance: Vec<AnchorProvenance>,
    /// Mentions whose best similarity did not exceed the threshold.
    pub unlinked: Vec<UnlinkedMention>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Link each mention to the argmax-similarity entity iff the similarity
/// strictly exceeds `delta`. Ties break to the lowest entity id; anchors
/// linked by several mentions keep the max-similarity provenance.
pub fn link(
    mentions: &[String],
    index: &EntityIndex,
    embedder: &dyn TextEmbedder,
    delta: f64,
) -> Result<AnchorSet, LinkerError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(LinkerError::InvalidThreshold(delta));
    }
    if index.provider_tag() != embedder.tag() {
        return Err(LinkerError::TagMismatch {
            index_tag: index.provider_tag().to_string(),
            embedder_tag: embedder.tag(),
        });
    }
    let mut set = AnchorSet::default();
    if mentions.is_empty() || index.count() == 0 {
        for m in mentions {
            set.unlinked.push(UnlinkedMention {
                mention: m.clone(),
                best_similarity: f64::NEG_INFINITY,
                best_entity: None,
            });
        }
        return Ok(set);
    }

    let vectors = embedder.embed(mentions)?;
    if vectors.len() != mentions.len() {
        return Err(LinkerError::CountMismatch {
            expected: mentions.len(),
            got: vectors.len(),
        });
    }

    let mut anchor_slot: HashMap<EntityId, usize> = HashMap::new();
    for (mention, vector) in mentions.iter().zip(&vectors) {
        let mut best_sim = f64::NEG_INFINITY;
        let mut best_entity = 0usize;
        for i in 0..index.count() {
            let sim = index.similarity(vector, i);
            if sim > best_sim {
                best_sim = sim;
                best_entity = i;
            }
        }
        let entity = EntityId(best_entity as u32);
        if best_sim > delta {
            match anchor_slot.get(&entity) {
                Some(&slot) => {
                    if best_sim > set.provenance[slot].similarity {
                        set.provenance[slot] = AnchorProvenance {
                            entity,
                            mention: mention.clone(),
                            similarity: best_sim,
                        };
                    }
                }
                None => {
                    anchor_slot.insert(entity, set.anchors.len());
                    set.anchors.push(entity);
                    set.provenance.push(AnchorProvenance {
                        entity,
                        mention: mention.clone(),
                        similarity: best_sim,
                    });
                }
            }
        } else {
            set.unlinked.push(UnlinkedMention {
                mention: mention.clone(),
                best_similarity: best_sim,
                best_entity: Some(entity),
            });
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{ingest, EntityInput, IngestOptions};
    use crate::providers::doubles::HashEmbedder;

    fn graph_with_names(names: &[&str]) -> KnowledgeGraph {
        let entities: Vec<_> = names.iter().map(|n| EntityInput::new(*n)).collect();
        ingest(&entities, &[], &IngestOptions::default()).unwrap()
    }

    #[test]
    fn index_has_one_row_per_entity() {
        let g = graph_with_names(&["a", "b", "c"]);
        let e = HashEmbedder::new(16, 1);
        let index = build_index(&g, &e).unwrap();
        assert_eq!(index.count(), 3);
        assert_eq!(index.dim(), 16);
    }

    /// Each row must equal a direct re-embedding of the entity name.
    #[test]
    fn rows_match_direct_embedding() {
        let names: Vec<String> = (0..200).map(|i| format!("entity {i}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let g = graph_with_names(&refs);
        let e = HashEmbedder::new(16, 9);
        let index = build_index(&g, &e).unwrap();
        for (i, name) in names.iter().enumerate() {
            let direct = e.embed(std::slice::from_ref(name)).unwrap();
            let row = index.row(i);
            for (a, b) in row.iter().zip(direct[0].values()) {
                assert_eq!(a, b);
            }
            let norm: f64 = row.iter().map(|v| *v as f64 * *v as f64).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn cache_round_trip_is_byte_identical() {
        let g = graph_with_names(&["a", "b", "胃痛"]);
        let e = HashEmbedder::new(8, 4);
        let index = build_index(&g, &e).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.idx");
        let p2 = dir.path().join("two.idx");
        save_index(&index, &p1).unwrap();
        let rebuilt = build_index(&g, &e).unwrap();
        save_index(&rebuilt, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let loaded = load_index(&p1).unwrap();
        assert_eq!(loaded, index);
    }

    #[test]
    fn load_or_build_rebuilds_on_dimension_drift() {
        let g = graph_with_names(&["a", "b"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.idx");

        let e8 = HashEmbedder::new(8, 1);
        let (_, rebuilt) = load_or_build(&path, &g, &e8).unwrap();
        assert!(rebuilt);
        let (_, rebuilt) = load_or_build(&path, &g, &e8).unwrap();
        assert!(!rebuilt);

        // A different embedder configuration invalidates the cache.
        let e16 = HashEmbedder::new(16, 1);
        let (index, rebuilt) = load_or_build(&path, &g, &e16).unwrap();
        assert!(rebuilt);
        assert_eq!(index.dim(), 16);
    }

    #[test]
    fn exact_name_links_with_similarity_one() {
        let g = graph_with_names(&["stomach reflux", "fever"]);
        let e = HashEmbedder::new(16, 2);
        let index = build_index(&g, &e).unwrap();
        let set = link(&["stomach reflux".to_string()], &index, &e, 0.7).unwrap();
        assert_eq!(set.anchors, vec![EntityId(0)]);
        assert!((set.provenance[0].similarity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn below_threshold_produces_no_anchor() {
        let g = graph_with_names(&["alpha", "beta"]);
        let e = HashEmbedder::new(64, 2);
        let index = build_index(&g, &e).unwrap();
        let set = link(
            &["completely unrelated string".to_string()],
            &index,
            &e,
            0.7,
        )
        .unwrap();
        assert!(set.anchors.is_empty());
        assert_eq!(set.unlinked.len(), 1);
        assert!(set.unlinked[0].best_similarity <= 0.7);
    }

    #[test]
    fn ties_break_to_lowest_entity_id() {
        // Two entities with the same name embed identically; the argmax
        // must resolve to the lower id.
        let entities = vec![
            EntityInput::new("dup").with_description("one"),
            EntityInput::new("dup").with_description("two"),
        ];
        let g = ingest(&entities, &[], &IngestOptions::default()).unwrap();
        let e = HashEmbedder::new(16, 5);
        let index = build_index(&g, &e).unwrap();
        let set = link(&["dup".to_string()], &index, &e, 0.5).unwrap();
        assert_eq!(set.anchors, vec![EntityId(0)]);
    }

    #[test]
    fn duplicate_links_keep_max_similarity_provenance() {
        let g = graph_with_names(&["fever"]);
        let e = HashEmbedder::new(16, 6);
        let index = build_index(&g, &e).unwrap();
        // Same anchor twice via the identical mention: one anchor, one entry.
        let set = link(
            &["fever".to_string(), "fever".to_string()],
            &index,
            &e,
            0.5,
        )
        .unwrap();
        assert_eq!(set.anchors.len(), 1);
        assert_eq!(set.provenance.len(), 1);
    }

    #[test]
    fn tag_mismatch_is_an_error() {
        let g = graph_with_names(&["a"]);
        let e1 = HashEmbedder::new(8, 1);
        let e2 = HashEmbedder::new(8, 2);
        let index = build_index(&g, &e1).unwrap();
        assert!(matches!(
            link(&["a".to_string()], &index, &e2, 0.7),
            Err(LinkerError::TagMismatch { .. })
        ));
    }

    #[test]
    fn invalid_threshold_is_an_error() {
        let g = graph_with_names(&["a"]);
        let e = HashEmbedder::new(8, 1);
        let index = build_index(&g, &e).unwrap();
        assert!(matches!(
            link(&["a".to_string()], &index, &e, 1.5),
            Err(LinkerError::InvalidThreshold(_))
        ));
    }

    /// Scaling raw embeddings by a positive constant before normalization
    /// must leave the linked set unchanged.
    #[test]
    fn argmax_is_scale_invariant() {
        struct Scaled {
            inner: HashEmbedder,
            factor: f32,
        }
        impl TextEmbedder for Scaled {
            fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
                let vs = self.inner.embed(texts)?;
                vs.into_iter()
                    .map(|v| {
                        EmbeddingVector::from_raw(
                            v.values().iter().map(|x| x * self.factor).collect(),
                        )
                    })
                    .collect()
            }
            fn tag(&self) -> String {
                self.inner.tag()
            }
        }

        let names: Vec<String> = (0..30).map(|i| format!("n{i}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let g = graph_with_names(&refs);
        let plain = HashEmbedder::new(8, 11);
        let scaled = Scaled {
            inner: HashEmbedder::new(8, 11),
            factor: 37.5,
        };
        let mentions: Vec<String> = (0..10)
            .map(|i| if i % 2 == 0 { format!("n{i}") } else { format!("m{i}") })
            .collect();

        let index_a = build_index(&g, &plain).unwrap();
        let index_b = build_index(&g, &scaled).unwrap();
        let a = link(&mentions, &index_a, &plain, 0.5).unwrap();
        let b = link(&mentions, &index_b, &scaled, 0.5).unwrap();
        assert_eq!(a.anchors, b.anchors);
    }
}

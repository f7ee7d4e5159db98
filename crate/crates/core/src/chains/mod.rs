//! Reasoning chains between anchor entities.
//!
//! A chain is a simple, direction-patterned walk between two anchors, read
//! left to right:
//!
//! - **Path** (head-to-tail): every edge points forward.
//! - **CoAncestor** (tail-to-tail): a forward prefix meets a backward
//!   suffix, so both anchors point *into* a pivot node.
//! - **CoOccurrence** (head-to-head): a backward prefix meets a forward
//!   suffix, so a pivot node points *out* to both anchors.
//!
//! Chains carry the endpoint entity descriptions and render as arrow text
//! such as `Kidney stones → Laboratory tests → Serum calcium ← Laboratory
//! tests ← Gastric ulcer`.

mod search;

pub use search::{search_chains, search_chains_with_stats, ChainSearchConfig, SearchStats};

use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, KnowledgeGraph, RelationId};

/// Direction pattern family of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Path,
    CoAncestor,
    CoOccurrence,
}

impl std::fmt::Display for ChainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ChainKind::Path => "path",
            ChainKind::CoAncestor => "co_ancestor",
            ChainKind::CoOccurrence => "co_occurrence",
        };
        f.write_str(s)
    }
}

/// Orientation of one edge as the chain is read left to right: `Forward`
/// means `(nodes[i], r, nodes[i+1])` is a triplet, `Backward` means
/// `(nodes[i+1], r, nodes[i])` is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeDirection {
    Forward,
    Backward,
}

impl EdgeDirection {
    fn flipped(self) -> Self {
        match self {
            EdgeDirection::Forward => EdgeDirection::Backward,
            EdgeDirection::Backward => EdgeDirection::Forward,
        }
    }
}

/// One simple chain between two anchors, with endpoint descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub kind: ChainKind,
    /// Pairwise-distinct entities; anchors at both ends.
    pub nodes: Vec<EntityId>,
    pub relations: Vec<RelationId>,
    pub directions: Vec<EdgeDirection>,
    pub head_description: Option<String>,
    pub tail_description: Option<String>,
}

impl ReasoningChain {
    pub fn hops(&self) -> usize {
        self.relations.len()
    }

    pub fn head(&self) -> EntityId {
        self.nodes[0]
    }

    pub fn tail(&self) -> EntityId {
        *self.nodes.last().expect("chain has nodes")
    }

    /// Re-validate shape and every edge against the triplet store.
    pub fn validate(&self, g: &KnowledgeGraph) -> bool {
        let hops = self.hops();
        if hops == 0
            || self.nodes.len() != hops + 1
            || self.directions.len() != hops
        {
            return false;
        }
        let mut seen = std::collections::HashSet::new();
        if !self.nodes.iter().all(|n| seen.insert(*n)) {
            return false;
        }
        let pattern_ok = match self.kind {
            ChainKind::Path => self
                .directions
                .iter()
                .all(|d| *d == EdgeDirection::Forward),
            ChainKind::CoAncestor => split_pattern(&self.directions, EdgeDirection::Forward),
            ChainKind::CoOccurrence => split_pattern(&self.directions, EdgeDirection::Backward),
        };
        if !pattern_ok {
            return false;
        }
        for i in 0..hops {
            let (h, t) = match self.directions[i] {
                EdgeDirection::Forward => (self.nodes[i], self.nodes[i + 1]),
                EdgeDirection::Backward => (self.nodes[i + 1], self.nodes[i]),
            };
            if !g.has_triplet(h, self.relations[i], t) {
                return false;
            }
        }
        true
    }

    /// Orientation-independent identity: the chain read from its
    /// lexicographically smaller endpoint. Two chains are the same object
    /// iff their canonical keys match.
    pub fn canonical_key(&self) -> CanonicalKey {
        let forward = self.nodes[0] <= self.tail();
        if forward {
            CanonicalKey {
                nodes: self.nodes.iter().map(|n| n.0).collect(),
                relations: self.relations.iter().map(|r| r.0).collect(),
                directions: self
                    .directions
                    .iter()
                    .map(|d| *d == EdgeDirection::Backward)
                    .collect(),
            }
        } else {
            CanonicalKey {
                nodes: self.nodes.iter().rev().map(|n| n.0).collect(),
                relations: self.relations.iter().rev().map(|r| r.0).collect(),
                directions: self
                    .directions
                    .iter()
                    .rev()
                    .map(|d| d.flipped() == EdgeDirection::Backward)
                    .collect(),
            }
        }
    }

    /// Total order used everywhere a chain list must be deterministic:
    /// hops ascending, then kind, then canonical sequence.
    pub fn ordering_key(&self) -> (usize, ChainKind, CanonicalKey) {
        (self.hops(), self.kind, self.canonical_key())
    }
}

/// `first+` then `flipped(first)+`, both runs non-empty.
fn split_pattern(directions: &[EdgeDirection], first: EdgeDirection) -> bool {
    if directions.len() < 2 || directions[0] != first {
        return false;
    }
    let pivot = directions.iter().position(|d| *d != first);
    match pivot {
        None => false,
        Some(p) => directions[p..].iter().all(|d| *d != first),
    }
}

/// Canonical chain identity; see [`ReasoningChain::canonical_key`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalKey {
    pub nodes: Vec<u32>,
    pub relations: Vec<u32>,
    /// Per-edge "is backward" flag in canonical orientation.
    pub directions: Vec<bool>,
}

/// Deduplicated, deterministically ordered chains.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainSet {
    pub chains: Vec<ReasoningChain>,
    /// True when a per-pair, global, or enumeration cap clipped results.
    pub truncated: bool,
}

impl ChainSet {
    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }
}

/// Result caps for [`search_chains`]; defaults keep retrieval usable when
/// hop counts would otherwise explode the result set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainCaps {
    pub per_pair: usize,
    pub global: usize,
}

impl Default for ChainCaps {
    fn default() -> Self {
        ChainCaps {
            per_pair: 200,
            global: 5000,
        }
    }
}

impl ChainCaps {
    /// No caps: exact exhaustive enumeration.
    pub fn unlimited() -> Self {
        ChainCaps {
            per_pair: usize::MAX,
            global: usize::MAX,
        }
    }
}

/// Render a chain as arrow-joined entity and relation names. Forward edges
/// render as `" → relation → "`, backward edges as `" ← relation ← "`; with
/// descriptions on, present endpoint descriptions are appended as
/// `" | name: description"`.
pub fn serialize_chain(c: &ReasoningChain, g: &KnowledgeGraph, with_descriptions: bool) -> String {
    let mut out = String::new();
    out.push_str(g.entity_name(c.nodes[0]));
    for i in 0..c.hops() {
        let rel = g.relation_name(c.relations[i]);
        match c.directions[i] {
            EdgeDirection::Forward => {
                out.push_str(" → ");
                out.push_str(rel);
                out.push_str(" → ");
            }
            EdgeDirection::Backward => {
                out.push_str(" ← ");
                out.push_str(rel);
                out.push_str(" ← ");
            }
        }
        out.push_str(g.entity_name(c.nodes[i + 1]));
    }
    if with_descriptions {
        if let Some(d) = &c.head_description {
            out.push_str(" | ");
            out.push_str(g.entity_name(c.head()));
            out.push_str(": ");
            out.push_str(d);
        }
        if let Some(d) = &c.tail_description {
            out.push_str(" | ");
            out.push_str(g.entity_name(c.tail()));
            out.push_str(": ");
            out.push_str(d);
        }
    }
    out
}

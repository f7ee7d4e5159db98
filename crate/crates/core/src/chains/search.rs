//! Chain search between every pair of anchors.
//!
//! Per unordered anchor pair, the three families are enumerated with
//! depth-first walks over the adjacency indexes:
//!
//! - Paths run a targeted DFS in each orientation, pruned by a radius-
//!   limited distance ball around the target so only productive subtrees
//!   are expanded.
//! - CoAncestor/CoOccurrence chains join open walks from both anchors on a
//!   common pivot (forward walks for CoAncestor, backward for
//!   CoOccurrence), with the prefix always rooted at the smaller anchor so
//!   every chain is found exactly once, already in canonical orientation.
//!
//! Results fill shortest-first, then by canonical order, up to the per-pair
//! and global caps. A per-enumeration budget (scaled from the per-pair cap)
//! bounds work on adversarially dense graphs; when it trips, the result is
//! still deterministic and `truncated` is set. Uncapped searches are exact.

use std::collections::HashMap;

use crate::kg::{Direction, EntityId, KnowledgeGraph, RelationId};
use crate::linker::AnchorSet;

use super::{ChainCaps, ChainKind, ChainSet, EdgeDirection, ReasoningChain};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSearchConfig {
    /// Maximum hops per chain.
    pub k: usize,
    /// Minimum hops per chain; 1 admits single-edge paths.
    pub min_hops: usize,
    pub caps: ChainCaps,
}

impl Default for ChainSearchConfig {
    fn default() -> Self {
        ChainSearchConfig {
            k: 3,
            min_hops: 1,
            caps: ChainCaps::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    /// Chains enumerated before caps were applied. Exact unless an
    /// enumeration budget tripped (which also sets `truncated`).
    pub raw_count: usize,
}

/// Every chain satisfying the pattern invariants for every unordered anchor
/// pair, deduplicated, in deterministic order, up to the configured caps.
pub fn search_chains(
    g: &KnowledgeGraph,
    anchors: &AnchorSet,
    cfg: &ChainSearchConfig,
) -> ChainSet {
    search_chains_with_stats(g, anchors, cfg).0
}

pub fn search_chains_with_stats(
    g: &KnowledgeGraph,
    anchors: &AnchorSet,
    cfg: &ChainSearchConfig,
) -> (ChainSet, SearchStats) {
    let mut ids: Vec<EntityId> = anchors
        .anchors
        .iter()
        .copied()
        .filter(|a| a.index() < g.entity_count())
        .collect();
    ids.sort_unstable();
    ids.dedup();

    if ids.len() < 2 || cfg.k == 0 || cfg.min_hops > cfg.k {
        return (ChainSet::default(), SearchStats::default());
    }

    let budget = enumeration_budget(&cfg.caps);

    // Distance from any node to each anchor along forward edges, radius
    // k-1: prunes the targeted path DFS.
    let balls: HashMap<EntityId, Vec<u32>> = ids
        .iter()
        .map(|&t| (t, distance_ball(g, t, Direction::Reverse, cfg.k.saturating_sub(1))))
        .collect();

    // Open walks from an anchor depend only on the anchor and direction;
    // enumerate once per anchor, not once per pair.
    let mut sides: HashMap<(EntityId, bool), SideWalks> = HashMap::new();
    if cfg.k >= 2 {
        for &anchor in &ids {
            for dir in [Direction::Forward, Direction::Reverse] {
                sides.insert(
                    (anchor, dir == Direction::Reverse),
                    SideWalks::enumerate(g, anchor, dir, cfg.k - 1, budget),
                );
            }
        }
    }

    let mut merged: Vec<ReasoningChain> = Vec::new();
    let mut truncated = false;
    let mut raw_count = 0usize;

    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            let (chains, pair_truncated, enumerated) =
                chains_for_pair(g, ids[i], ids[j], cfg, budget, &balls, &sides);
            truncated |= pair_truncated;
            raw_count += enumerated;
            merged.extend(chains);
        }
    }

    let mut keyed: Vec<_> = merged
        .into_iter()
        .map(|c| (c.ordering_key(), c))
        .collect();
    keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let mut chains: Vec<ReasoningChain> = keyed.into_iter().map(|(_, c)| c).collect();
    if chains.len() > cfg.caps.global {
        chains.truncate(cfg.caps.global);
        truncated = true;
    }

    for c in &mut chains {
        c.head_description = g
            .entity(c.head())
            .ok()
            .and_then(|e| e.display_description());
        c.tail_description = g
            .entity(c.tail())
            .ok()
            .and_then(|e| e.display_description());
    }

    (ChainSet { chains, truncated }, SearchStats { raw_count })
}

/// Budget on enumerated chains per DFS/join, scaled from the per-pair cap.
/// Uncapped searches (per_pair = MAX) get an unlimited budget.
fn enumeration_budget(caps: &ChainCaps) -> usize {
    caps.per_pair.saturating_mul(64).max(8192)
}

fn adj(g: &KnowledgeGraph, v: EntityId, dir: Direction) -> &[(RelationId, EntityId)] {
    g.neighbors(v, dir).unwrap_or(&[])
}

const UNREACHED: u32 = u32::MAX;

/// Dense BFS distances from `t` over `dir` adjacency, limited to `radius`;
/// `UNREACHED` marks nodes outside the ball.
fn distance_ball(g: &KnowledgeGraph, t: EntityId, dir: Direction, radius: usize) -> Vec<u32> {
    let mut dist = vec![UNREACHED; g.entity_count()];
    dist[t.index()] = 0;
    let mut frontier = vec![t];
    for d in 1..=radius as u32 {
        let mut next = Vec::new();
        for &u in &frontier {
            for &(_, v) in adj(g, u, dir) {
                if dist[v.index()] == UNREACHED {
                    dist[v.index()] = d;
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    dist
}

/// All simple walks of 1..=max_hops edges from one anchor along one
/// adjacency direction, indexed by terminal node.
struct SideWalks {
    walks: Vec<(Vec<EntityId>, Vec<RelationId>)>,
    by_terminal: HashMap<EntityId, Vec<usize>>,
    truncated: bool,
}

impl SideWalks {
    fn enumerate(
        g: &KnowledgeGraph,
        anchor: EntityId,
        dir: Direction,
        max_hops: usize,
        budget: usize,
    ) -> Self {
        let (walks, truncated) = open_walks(g, anchor, dir, max_hops, budget);
        let mut by_terminal: HashMap<EntityId, Vec<usize>> = HashMap::new();
        for (i, w) in walks.iter().enumerate() {
            by_terminal.entry(*w.0.last().unwrap()).or_default().push(i);
        }
        SideWalks {
            walks,
            by_terminal,
            truncated,
        }
    }
}

fn chains_for_pair(
    g: &KnowledgeGraph,
    a: EntityId,
    b: EntityId,
    cfg: &ChainSearchConfig,
    budget: usize,
    balls: &HashMap<EntityId, Vec<u32>>,
    sides: &HashMap<(EntityId, bool), SideWalks>,
) -> (Vec<ReasoningChain>, bool, usize) {
    let mut level: Vec<ReasoningChain> = Vec::new();
    let mut truncated = false;

    // Paths in both orientations, stored from their true head.
    for (s, t) in [(a, b), (b, a)] {
        let mut walker = TargetedWalk {
            g,
            target: t,
            max_hops: cfg.k,
            min_hops: cfg.min_hops.max(1),
            ball: &balls[&t],
            budget,
            truncated: false,
            nodes: vec![s],
            relations: Vec::new(),
            out: Vec::new(),
        };
        walker.run();
        truncated |= walker.truncated;
        for (nodes, relations) in walker.out {
            let hops = relations.len();
            level.push(ReasoningChain {
                kind: ChainKind::Path,
                directions: vec![EdgeDirection::Forward; hops],
                nodes,
                relations,
                head_description: None,
                tail_description: None,
            });
        }
    }

    // Pivot joins; prefix rooted at the smaller anchor (a < b by caller)
    // so each chain appears once, in canonical orientation.
    if cfg.k >= 2 {
        for (kind, reverse) in [
            (ChainKind::CoAncestor, false),
            (ChainKind::CoOccurrence, true),
        ] {
            let a_side = &sides[&(a, reverse)];
            let b_side = &sides[&(b, reverse)];
            truncated |= a_side.truncated | b_side.truncated;

            let mut emitted = 0usize;
            'join: for (a_nodes, a_rels) in &a_side.walks {
                let pivot = *a_nodes.last().unwrap();
                let Some(candidates) = b_side.by_terminal.get(&pivot) else {
                    continue;
                };
                for &bi in candidates {
                    let (b_nodes, b_rels) = &b_side.walks[bi];
                    let hops = a_rels.len() + b_rels.len();
                    if hops > cfg.k || hops < cfg.min_hops {
                        continue;
                    }
                    // Share exactly the pivot.
                    if a_nodes[..a_nodes.len() - 1]
                        .iter()
                        .any(|n| b_nodes.contains(n))
                    {
                        continue;
                    }
                    if emitted >= budget {
                        truncated = true;
                        break 'join;
                    }
                    emitted += 1;

                    let mut nodes = a_nodes.clone();
                    nodes.extend(b_nodes[..b_nodes.len() - 1].iter().rev());
                    let mut relations = a_rels.clone();
                    relations.extend(b_rels.iter().rev());
                    let (prefix_dir, suffix_dir) = match kind {
                        ChainKind::CoAncestor => {
                            (EdgeDirection::Forward, EdgeDirection::Backward)
                        }
                        _ => (EdgeDirection::Backward, EdgeDirection::Forward),
                    };
                    let mut directions = vec![prefix_dir; a_rels.len()];
                    directions.extend(vec![suffix_dir; b_rels.len()]);

                    level.push(ReasoningChain {
                        kind,
                        nodes,
                        relations,
                        directions,
                        head_description: None,
                        tail_description: None,
                    });
                }
            }
        }
    }

    let enumerated = level.len();
    let mut keyed: Vec<_> = level.into_iter().map(|c| (c.ordering_key(), c)).collect();
    keyed.sort_unstable_by(|x, y| x.0.cmp(&y.0));
    let mut kept: Vec<ReasoningChain> = keyed.into_iter().map(|(_, c)| c).collect();
    if kept.len() > cfg.caps.per_pair {
        kept.truncate(cfg.caps.per_pair);
        truncated = true;
    }
    (kept, truncated, enumerated)
}

/// Targeted DFS emitting every simple forward path from the walk root to
/// `target` with `min_hops..=max_hops` edges. Expansion is pruned to nodes
/// that can still reach the target within the remaining hop allowance.
struct TargetedWalk<'a> {
    g: &'a KnowledgeGraph,
    target: EntityId,
    max_hops: usize,
    min_hops: usize,
    ball: &'a [u32],
    budget: usize,
    truncated: bool,
    nodes: Vec<EntityId>,
    relations: Vec<RelationId>,
    out: Vec<(Vec<EntityId>, Vec<RelationId>)>,
}

impl TargetedWalk<'_> {
    fn run(&mut self) {
        self.step();
    }

    fn step(&mut self) {
        if self.truncated {
            return;
        }
        let u = *self.nodes.last().unwrap();
        let depth = self.relations.len();
        for &(r, v) in adj(self.g, u, Direction::Forward) {
            if self.truncated {
                return;
            }
            if self.nodes.contains(&v) {
                continue;
            }
            let new_depth = depth + 1;
            if v == self.target {
                if new_depth >= self.min_hops {
                    if self.out.len() >= self.budget {
                        self.truncated = true;
                        return;
                    }
                    let mut nodes = self.nodes.clone();
                    nodes.push(v);
                    let mut relations = self.relations.clone();
                    relations.push(r);
                    self.out.push((nodes, relations));
                }
                continue;
            }
            if new_depth >= self.max_hops {
                continue;
            }
            let remaining = (self.max_hops - new_depth) as u32;
            if self.ball[v.index()] > remaining {
                continue;
            }
            self.nodes.push(v);
            self.relations.push(r);
            self.step();
            self.relations.pop();
            self.nodes.pop();
        }
    }
}

/// Every simple walk of 1..=max_hops edges from `start` along `dir`
/// adjacency, in DFS order. Each visited node is exactly one emitted walk,
/// so the budget bounds total work.
#[allow(clippy::type_complexity)]
fn open_walks(
    g: &KnowledgeGraph,
    start: EntityId,
    dir: Direction,
    max_hops: usize,
    budget: usize,
) -> (Vec<(Vec<EntityId>, Vec<RelationId>)>, bool) {
    struct Walk<'a> {
        g: &'a KnowledgeGraph,
        dir: Direction,
        max_hops: usize,
        budget: usize,
        truncated: bool,
        nodes: Vec<EntityId>,
        relations: Vec<RelationId>,
        out: Vec<(Vec<EntityId>, Vec<RelationId>)>,
    }
    impl Walk<'_> {
        fn step(&mut self) {
            if self.truncated {
                return;
            }
            let u = *self.nodes.last().unwrap();
            let depth = self.relations.len();
            for &(r, v) in adj(self.g, u, self.dir) {
                if self.truncated {
                    return;
                }
                if self.nodes.contains(&v) {
                    continue;
                }
                if self.out.len() >= self.budget {
                    self.truncated = true;
                    return;
                }
                self.nodes.push(v);
                self.relations.push(r);
                self.out.push((self.nodes.clone(), self.relations.clone()));
                if depth + 1 < self.max_hops {
                    self.step();
                }
                self.relations.pop();
                self.nodes.pop();
            }
        }
    }

    if max_hops == 0 {
        return (Vec::new(), false);
    }
    let mut walk = Walk {
        g,
        dir,
        max_hops,
        budget,
        truncated: false,
        nodes: vec![start],
        relations: Vec::new(),
        out: Vec::new(),
    };
    walk.step();
    (walk.out, walk.truncated)
}

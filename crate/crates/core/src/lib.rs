//! Hypothesis-driven knowledge-graph retrieval for LLM question answering.
//!
//! The engine answers a query in six stages: draft a hypothesis answer with a
//! text generator, extract entities from the query and the hypothesis, link
//! them to knowledge-graph anchors by embedding similarity, enumerate
//! reasoning chains between anchors, rerank the chains against sliding-window
//! fragments of the query and hypothesis, and finally feed the surviving
//! chains back to the generator through a reader prompt.
//!
//! All four model dependencies (generator, embedder, pair scorer, entity
//! recognizer) sit behind the traits in [`providers`], with deterministic
//! test doubles and HTTP adapters, so the whole pipeline runs offline and
//! reproducibly.

pub mod chains;
pub mod eval;
pub mod extraction;
pub mod kg;
pub mod linker;
pub mod pipeline;
pub mod prompts;
pub mod providers;
pub mod rerank;

pub use chains::{search_chains, serialize_chain, ChainCaps, ChainKind, ChainSet, ReasoningChain};
pub use kg::{EntityId, EntityRecord, KnowledgeGraph, RelationId, Triplet};
pub use linker::{build_index, link, AnchorSet, EntityIndex};
pub use pipeline::{run, PipelineConfig, PipelineDeps, PipelineTrace};
pub use rerank::{chunk, rerank, Fragment, PrunedChains, ScoredChain};

//! Provider wiring: deterministic offline doubles or HTTP adapters
//! configured from the `HYKGE_*_URL` environment variables.

use hykge_core::kg::KnowledgeGraph;
use hykge_core::providers::doubles::{
    GazetteerRecognizer, HashEmbedder, ScriptedGenerator, TokenOverlapScorer,
};
use hykge_core::providers::http::{HttpEmbedder, HttpGenerator, HttpRecognizer, HttpScorer};
use hykge_core::providers::{EntityRecognizer, PairScorer, TextEmbedder, TextGenerator};

use crate::CliError;

/// Embedding shape for the offline doubles; the index cache is keyed by the
/// embedder tag, so these must stay fixed.
pub const DOUBLES_DIM: usize = 64;
pub const DOUBLES_SEED: u64 = 2024;

pub struct ProviderBundle {
    pub generator: Box<dyn TextGenerator>,
    pub embedder: Box<dyn TextEmbedder>,
    pub scorer: Box<dyn PairScorer>,
    pub recognizer: Box<dyn EntityRecognizer>,
}

pub fn offline_embedder() -> HashEmbedder {
    HashEmbedder::new(DOUBLES_DIM, DOUBLES_SEED)
}

/// Offline bundle: hash embedder, token-overlap scorer, a gazetteer
/// recognizer seeded from the graph's entity names, and a generator that
/// answers with a fixed string for unscripted prompts.
pub fn offline_bundle(graph: Option<&KnowledgeGraph>) -> ProviderBundle {
    let names: Vec<String> = graph
        .map(|g| g.entities().iter().map(|e| e.name.clone()).collect())
        .unwrap_or_default();
    ProviderBundle {
        generator: Box::new(ScriptedGenerator::new(
            "(offline doubles: no scripted completion for this prompt)",
        )),
        embedder: Box::new(offline_embedder()),
        scorer: Box::new(TokenOverlapScorer::new()),
        recognizer: Box::new(GazetteerRecognizer::new(names)),
    }
}

pub fn env_bundle() -> Result<ProviderBundle, CliError> {
    let provider = |e: hykge_core::providers::ProviderError| CliError::format(e.to_string());
    Ok(ProviderBundle {
        generator: Box::new(HttpGenerator::from_env().map_err(provider)?),
        embedder: Box::new(HttpEmbedder::from_env().map_err(provider)?),
        scorer: Box::new(HttpScorer::from_env().map_err(provider)?),
        recognizer: Box::new(HttpRecognizer::from_env().map_err(provider)?),
    })
}

pub fn build_bundle(doubles: bool, graph: Option<&KnowledgeGraph>) -> Result<ProviderBundle, CliError> {
    if doubles {
        Ok(offline_bundle(graph))
    } else {
        env_bundle()
    }
}

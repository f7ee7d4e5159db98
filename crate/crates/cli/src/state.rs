//! Loaded runtime state shared by the query, eval, and serve commands.

use std::collections::HashSet;
use std::path::PathBuf;

use hykge_core::extraction::{DictionarySegmenter, Tokenizer, WhitespaceTokenizer};
use hykge_core::kg::{load_stopwords, read_snapshot, KnowledgeGraph};
use hykge_core::linker::{load_or_build, EntityIndex};
use hykge_core::pipeline::{HoCache, PipelineConfig, PipelineDeps};
use hykge_core::prompts::PromptSet;

use crate::config::AppConfig;
use crate::providers::{build_bundle, ProviderBundle};
use crate::CliError;

pub struct LoadedState {
    pub graph: KnowledgeGraph,
    pub index: EntityIndex,
    pub stopwords: HashSet<String>,
    pub prompts: PromptSet,
    pub tokenizer: Box<dyn Tokenizer>,
    pub providers: ProviderBundle,
    pub pipeline: PipelineConfig,
    pub ho_cache: Option<HoCache>,
}

/// Resource paths after CLI-flag overrides.
#[derive(Debug, Clone, Default)]
pub struct ResourceOverrides {
    pub snapshot: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
}

impl LoadedState {
    pub fn load(
        config: &AppConfig,
        overrides: &ResourceOverrides,
        doubles: bool,
    ) -> Result<LoadedState, CliError> {
        let snapshot_path = overrides
            .snapshot
            .clone()
            .or_else(|| config.resources.snapshot_path.clone())
            .ok_or_else(|| {
                CliError::format("no graph snapshot configured (set [resources] snapshot_path or pass --snapshot)")
            })?;
        let graph = read_snapshot(&snapshot_path).map_err(CliError::from)?;

        let providers = build_bundle(doubles, Some(&graph))?;

        let index_path = overrides
            .index
            .clone()
            .or_else(|| config.resources.entity_index_path.clone())
            .unwrap_or_else(|| snapshot_path.with_extension("idx"));
        let (index, rebuilt) =
            load_or_build(&index_path, &graph, providers.embedder.as_ref())
                .map_err(CliError::from)?;
        if rebuilt {
            eprintln!("entity index rebuilt at {}", index_path.display());
        }

        let stopwords = match overrides
            .stopwords
            .clone()
            .or_else(|| config.resources.stopwords_path.clone())
        {
            Some(p) => load_stopwords(&p).map_err(CliError::from)?,
            None => HashSet::new(),
        };

        let prompts = match &config.resources.prompt_dir {
            Some(dir) => PromptSet::from_dir(dir)
                .map_err(|e| CliError::format(e.to_string()))?,
            None => PromptSet::default(),
        };

        let tokenizer: Box<dyn Tokenizer> = match config.tokenizer.as_deref() {
            None | Some("dictionary") => Box::new(DictionarySegmenter::from_graph(&graph)),
            Some("whitespace") => Box::new(WhitespaceTokenizer),
            Some(other) => {
                return Err(CliError::format(format!(
                    "unknown tokenizer {other:?} (expected \"dictionary\" or \"whitespace\")"
                )))
            }
        };

        let ho_cache = match &config.resources.ho_cache_path {
            Some(p) => Some(HoCache::at_path(p.clone()).map_err(|e| {
                CliError::format(format!("cannot open hypothesis cache {}: {e}", p.display()))
            })?),
            None => None,
        };

        Ok(LoadedState {
            graph,
            index,
            stopwords,
            prompts,
            tokenizer,
            providers,
            pipeline: config.pipeline.clone(),
            ho_cache,
        })
    }

    pub fn deps(&self) -> PipelineDeps<'_> {
        PipelineDeps {
            graph: &self.graph,
            index: &self.index,
            stopwords: &self.stopwords,
            tokenizer: self.tokenizer.as_ref(),
            generator: self.providers.generator.as_ref(),
            embedder: self.providers.embedder.as_ref(),
            scorer: self.providers.scorer.as_ref(),
            recognizer: self.providers.recognizer.as_ref(),
            prompts: &self.prompts,
            ho_cache: self.ho_cache.as_ref(),
        }
    }
}

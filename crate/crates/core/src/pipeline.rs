//! End-to-end pipeline orchestration.
//!
//! One [`run`] executes: hypothesis draft → entity extraction → anchor
//! linking → chain search → fragment rerank → reader prompt → answer,
//! recording a full [`PipelineTrace`]. Stage flags switch individual stages
//! off for ablation runs; with every flag on the generator is called
//! exactly twice per query (hypothesis + reader).

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chains::{search_chains_with_stats, ChainCaps, ChainSearchConfig, ChainSet};
use crate::extraction::{extract_entities, Tokenizer};
use crate::kg::KnowledgeGraph;
use crate::linker::{link, AnchorSet, EntityIndex};
use crate::prompts::{anchor_lines, chain_lines, PromptSet};
use crate::providers::{
    EntityRecognizer, GenerationParams, PairScorer, TextEmbedder, TextGenerator,
};
use crate::rerank::{chunk, rerank, Aggregation, Fragment, FragmentSource, PrunedChains, ScoredChain};

/// All tunables for one pipeline run. Field names double as the config-file
/// keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Maximum chain hops.
    pub k: usize,
    /// Chains kept after reranking.
    pub top_k: usize,
    /// Linking similarity threshold.
    pub delta: f64,
    /// Fragment window size in tokens.
    pub lc: usize,
    /// Fragment overlap in tokens.
    pub oc: usize,
    /// Minimum chain hops; 1 admits single-edge paths.
    pub min_hops: usize,
    pub per_pair_cap: usize,
    pub global_cap: usize,
    pub generation: GenerationParams,
    pub aggregation: Aggregation,
    pub use_ho: bool,
    pub use_fragments: bool,
    pub use_descriptions: bool,
    pub use_chains: bool,
    pub use_reranker: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 3,
            top_k: 10,
            delta: 0.7,
            lc: 10,
            oc: 4,
            min_hops: 1,
            per_pair_cap: 200,
            global_cap: 5000,
            generation: GenerationParams::default(),
            aggregation: Aggregation::Max,
            use_ho: true,
            use_fragments: true,
            use_descriptions: true,
            use_chains: true,
            use_reranker: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.lc == 0 || self.oc >= self.lc {
            return Err(PipelineError::InvalidConfig(format!(
                "lc must exceed oc (lc={}, oc={})",
                self.lc, self.oc
            )));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(PipelineError::InvalidConfig(format!(
                "delta {} outside [0, 1]",
                self.delta
            )));
        }
        if self.k == 0 || self.top_k == 0 {
            return Err(PipelineError::InvalidConfig(
                "k and top_k must be positive".to_string(),
            ));
        }
        if self.min_hops == 0 || self.min_hops > self.k {
            return Err(PipelineError::InvalidConfig(format!(
                "min_hops {} outside 1..=k",
                self.min_hops
            )));
        }
        Ok(())
    }

    pub fn chain_config(&self) -> ChainSearchConfig {
        ChainSearchConfig {
            k: self.k,
            min_hops: self.min_hops,
            caps: ChainCaps {
                per_pair: self.per_pair_cap,
                global: self.global_cap,
            },
        }
    }
}

/// The six stage configurations reported in ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    WithoutHo,
    WithoutChains,
    WithoutDescription,
    WithoutFragment,
    WithoutReranker,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::Full,
        Ablation::WithoutHo,
        Ablation::WithoutChains,
        Ablation::WithoutDescription,
        Ablation::WithoutFragment,
        Ablation::WithoutReranker,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::WithoutHo => "w/o-HO",
            Ablation::WithoutChains => "w/o-Chains",
            Ablation::WithoutDescription => "w/o-Description",
            Ablation::WithoutFragment => "w/o-Fragment",
            Ablation::WithoutReranker => "w/o-Reranker",
        }
    }

    /// Accepts the report-style names (`w/o-HO`) and shell-friendly ones
    /// (`wo-ho`), case-insensitively.
    pub fn parse(name: &str) -> Option<Ablation> {
        let norm = name.trim().to_lowercase().replace("w/o", "wo");
        match norm.as_str() {
            "full" | "hykge" => Some(Ablation::Full),
            "wo-ho" => Some(Ablation::WithoutHo),
            "wo-chains" => Some(Ablation::WithoutChains),
            "wo-description" => Some(Ablation::WithoutDescription),
            "wo-fragment" => Some(Ablation::WithoutFragment),
            "wo-reranker" => Some(Ablation::WithoutReranker),
            _ => None,
        }
    }

    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        match self {
            Ablation::Full => {}
            Ablation::WithoutHo => cfg.use_ho = false,
            Ablation::WithoutChains => cfg.use_chains = false,
            Ablation::WithoutDescription => cfg.use_descriptions = false,
            Ablation::WithoutFragment => cfg.use_fragments = false,
            Ablation::WithoutReranker => cfg.use_reranker = false,
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    HypothesisOutput,
    Extraction,
    Linking,
    ChainSearch,
    Rerank,
    Reader,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::HypothesisOutput => "hypothesis_output",
            Stage::Extraction => "extraction",
            Stage::Linking => "linking",
            Stage::ChainSearch => "chain_search",
            Stage::Rerank => "rerank",
            Stage::Reader => "reader",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pipeline stage '{stage}' failed: {message}")]
    StageFailed { stage: Stage, message: String },
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("query must not be empty")]
    EmptyQuery,
}

impl PipelineError {
    fn stage(stage: Stage, err: impl std::fmt::Display) -> Self {
        PipelineError::StageFailed {
            stage,
            message: err.to_string(),
        }
    }

    pub fn stage_name(&self) -> Option<Stage> {
        match self {
            PipelineError::StageFailed { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

/// Write-through cache for hypothesis outputs, keyed by query and
/// generation parameters. Hypothesis generation is the most expensive
/// stage and identical across ablation configs, so sharing one cache keeps
/// ablations comparable; writes are serialized by the internal mutex.
pub struct HoCache {
    map: Mutex<HashMap<String, String>>,
    path: Option<PathBuf>,
}

impl HoCache {
    pub fn in_memory() -> Self {
        HoCache {
            map: Mutex::new(HashMap::new()),
            path: None,
        }
    }

    /// Backed by a JSON-lines file (`{"key", "text"}` per line, last write
    /// wins); loads existing entries eagerly.
    pub fn at_path(path: PathBuf) -> std::io::Result<Self> {
        let mut map = HashMap::new();
        if path.exists() {
            let content = std::fs::read_to_string(&path)?;
            for line in content.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                if let Ok(entry) = serde_json::from_str::<CacheLine>(line) {
                    map.insert(entry.key, entry.text);
                }
            }
        }
        Ok(HoCache {
            map: Mutex::new(map),
            path: Some(path),
        })
    }

    pub fn key(query: &str, params: &GenerationParams) -> String {
        let mut h = Sha256::new();
        h.update(query.as_bytes());
        h.update(params.max_tokens.to_le_bytes());
        h.update(params.temperature.to_le_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.map.lock().expect("ho cache lock").get(key).cloned()
    }

    pub fn put(&self, key: String, text: String) {
        let mut map = self.map.lock().expect("ho cache lock");
        map.insert(key.clone(), text.clone());
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&CacheLine { key, text })
                .expect("serializable cache line");
            let _ = append_line(path, &line);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    text: String,
}

fn append_line(path: &PathBuf, line: &str) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    writeln!(f, "{line}")
}

/// Everything a run needs besides the query and config.
#[derive(Clone, Copy)]
pub struct PipelineDeps<'a> {
    pub graph: &'a KnowledgeGraph,
    pub index: &'a EntityIndex,
    pub stopwords: &'a HashSet<String>,
    pub tokenizer: &'a dyn Tokenizer,
    pub generator: &'a dyn TextGenerator,
    pub embedder: &'a dyn TextEmbedder,
    pub scorer: &'a dyn PairScorer,
    pub recognizer: &'a dyn EntityRecognizer,
    pub prompts: &'a PromptSet,
    pub ho_cache: Option<&'a HoCache>,
}

/// One anchor as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAnchor {
    pub entity_id: u32,
    pub name: String,
    pub mention: String,
    pub similarity: f64,
}

/// One pruned chain as recorded in the trace (text without descriptions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceChain {
    pub text: String,
    pub score: f64,
    pub kind: crate::chains::ChainKind,
    pub hops: usize,
    pub best_fragment: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainCounts {
    /// Chains enumerated before caps.
    pub raw: usize,
    /// Chains kept after caps.
    pub capped: usize,
    /// Chains kept after reranking.
    pub pruned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

/// Full per-stage provenance for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub query: String,
    /// Empty when the hypothesis stage is disabled (or the draft came back
    /// empty).
    pub hypothesis_output: String,
    pub mentions: Vec<String>,
    pub mention_source_counts: (usize, usize),
    pub anchors: Vec<TraceAnchor>,
    pub chain_counts: ChainCounts,
    pub chains_truncated: bool,
    pub fragment_count: usize,
    pub pruned_chains: Vec<TraceChain>,
    pub reader_prompt: String,
    pub answer: String,
    pub durations: Vec<StageTiming>,
}

impl PipelineTrace {
    /// Copy with durations cleared, for byte-stable comparisons.
    pub fn without_durations(&self) -> PipelineTrace {
        let mut t = self.clone();
        t.durations.clear();
        t
    }
}

struct RetrievalOutcome {
    hypothesis: String,
    extraction: crate::extraction::ExtractionResult,
    anchors: AnchorSet,
    chain_set: ChainSet,
    raw_count: usize,
    fragments: Vec<Fragment>,
    pruned: PrunedChains,
    durations: Vec<StageTiming>,
}

/// Stages before the reader: hypothesis draft, extraction, linking, chain
/// search, and rerank.
fn retrieve(
    query: &str,
    cfg: &PipelineConfig,
    deps: &PipelineDeps<'_>,
) -> Result<RetrievalOutcome, PipelineError> {
    cfg.validate()?;
    if query.trim().is_empty() {
        return Err(PipelineError::EmptyQuery);
    }
    let mut durations = Vec::new();

    // Hypothesis draft. An empty draft degrades to query-only retrieval.
    let started = Instant::now();
    let hypothesis = if cfg.use_ho {
        generate_hypothesis(query, cfg, deps)?
    } else {
        String::new()
    };
    push_timing(&mut durations, Stage::HypothesisOutput, started);

    // Entity extraction over query and hypothesis.
    let started = Instant::now();
    let extraction = extract_entities(query, &hypothesis, deps.recognizer)
        .map_err(|e| PipelineError::stage(Stage::Extraction, e))?;
    push_timing(&mut durations, Stage::Extraction, started);

    // Anchor linking.
    let started = Instant::now();
    let anchors = link(&extraction.mentions, deps.index, deps.embedder, cfg.delta)
        .map_err(|e| PipelineError::stage(Stage::Linking, e))?;
    push_timing(&mut durations, Stage::Linking, started);

    // Chain search.
    let started = Instant::now();
    let (chain_set, stats) = if cfg.use_chains {
        search_chains_with_stats(deps.graph, &anchors, &cfg.chain_config())
    } else {
        Default::default()
    };
    push_timing(&mut durations, Stage::ChainSearch, started);

    // Fragment chunking + rerank.
    let started = Instant::now();
    let fragments = build_fragments(query, &hypothesis, cfg, deps)?;
    let pruned = prune_chains(query, cfg, deps, &chain_set, &fragments)?;
    push_timing(&mut durations, Stage::Rerank, started);

    Ok(RetrievalOutcome {
        hypothesis,
        extraction,
        anchors,
        chain_set,
        raw_count: stats.raw_count,
        fragments,
        pruned,
        durations,
    })
}

fn outcome_trace(
    query: &str,
    outcome: RetrievalOutcome,
    g: &KnowledgeGraph,
    reader_prompt: String,
    answer: String,
) -> PipelineTrace {
    PipelineTrace {
        query: query.to_string(),
        hypothesis_output: outcome.hypothesis,
        mentions: outcome.extraction.mentions.clone(),
        mention_source_counts: outcome.extraction.source_counts(),
        anchors: trace_anchors(&outcome.anchors, g),
        chain_counts: ChainCounts {
            raw: outcome.raw_count,
            capped: outcome.chain_set.len(),
            pruned: outcome.pruned.len(),
        },
        chains_truncated: outcome.chain_set.truncated,
        fragment_count: outcome.fragments.len(),
        pruned_chains: outcome
            .pruned
            .chains
            .iter()
            .map(|sc| TraceChain {
                text: crate::chains::serialize_chain(&sc.chain, g, false),
                score: sc.score,
                kind: sc.chain.kind,
                hops: sc.chain.hops(),
                best_fragment: sc.best_fragment,
            })
            .collect(),
        reader_prompt,
        answer,
        durations: outcome.durations,
    }
}

/// Execute the enabled stages in order and return the full trace.
pub fn run(
    query: &str,
    cfg: &PipelineConfig,
    deps: &PipelineDeps<'_>,
) -> Result<PipelineTrace, PipelineError> {
    let mut outcome = retrieve(query, cfg, deps)?;

    let started = Instant::now();
    let background = if cfg.use_chains {
        chain_lines(&outcome.pruned, deps.graph, cfg.use_descriptions)
    } else {
        anchor_lines(&outcome.anchors.anchors, deps.graph, cfg.use_descriptions)
    };
    let reader_prompt = deps
        .prompts
        .render_reader_from_lines(query, &background)
        .map_err(|e| PipelineError::stage(Stage::Reader, e))?;
    let answer = deps
        .generator
        .generate(&reader_prompt, &cfg.generation)
        .map_err(|e| PipelineError::stage(Stage::Reader, e))?;
    push_timing(&mut outcome.durations, Stage::Reader, started);

    Ok(outcome_trace(query, outcome, deps.graph, reader_prompt, answer))
}

/// Retrieval stages only — no reader call. The returned trace has empty
/// `reader_prompt` and `answer` fields.
pub fn run_retrieval(
    query: &str,
    cfg: &PipelineConfig,
    deps: &PipelineDeps<'_>,
) -> Result<PipelineTrace, PipelineError> {
    let outcome = retrieve(query, cfg, deps)?;
    Ok(outcome_trace(
        query,
        outcome,
        deps.graph,
        String::new(),
        String::new(),
    ))
}

fn generate_hypothesis(
    query: &str,
    cfg: &PipelineConfig,
    deps: &PipelineDeps<'_>,
) -> Result<String, PipelineError> {
    let key = HoCache::key(query, &cfg.generation);
    if let Some(cache) = deps.ho_cache {
        if let Some(hit) = cache.get(&key) {
            return Ok(hit);
        }
    }
    let prompt = deps
        .prompts
        .render_ho(query)
        .map_err(|e| PipelineError::stage(Stage::HypothesisOutput, e))?;
    let draft = deps
        .generator
        .generate(&prompt, &cfg.generation)
        .map_err(|e| PipelineError::stage(Stage::HypothesisOutput, e))?;
    if let Some(cache) = deps.ho_cache {
        cache.put(key, draft.clone());
    }
    Ok(draft)
}

fn build_fragments(
    query: &str,
    hypothesis: &str,
    cfg: &PipelineConfig,
    deps: &PipelineDeps<'_>,
) -> Result<Vec<Fragment>, PipelineError> {
    if cfg.use_fragments {
        chunk(query, hypothesis, cfg.lc, cfg.oc, deps.stopwords, deps.tokenizer)
            .map_err(|e| PipelineError::stage(Stage::Rerank, e))
    } else {
        // Whole-text mode: one fragment holding all of filtered Q ⊕ HO.
        let mut tokens =
            crate::extraction::filter_tokens(query, deps.stopwords, deps.tokenizer);
        tokens.extend(crate::extraction::filter_tokens(
            hypothesis,
            deps.stopwords,
            deps.tokenizer,
        ));
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        Ok(vec![Fragment {
            text: tokens.join(" "),
            index: 0,
            source: FragmentSource::Mixed,
        }])
    }
}

fn prune_chains(
    query: &str,
    cfg: &PipelineConfig,
    deps: &PipelineDeps<'_>,
    chain_set: &ChainSet,
    fragments: &[Fragment],
) -> Result<PrunedChains, PipelineError> {
    if cfg.use_reranker {
        rerank(
            chain_set,
            deps.graph,
            fragments,
            query,
            deps.scorer,
            cfg.top_k,
            cfg.aggregation,
        )
        .map_err(|e| PipelineError::stage(Stage::Rerank, e))
    } else {
        // Keep the first topK chains in search order; no scorer calls.
        Ok(PrunedChains {
            chains: chain_set
                .chains
                .iter()
                .take(cfg.top_k)
                .map(|c| ScoredChain {
                    chain: c.clone(),
                    score: 0.0,
                    best_fragment: 0,
                })
                .collect(),
        })
    }
}

fn trace_anchors(anchors: &AnchorSet, g: &KnowledgeGraph) -> Vec<TraceAnchor> {
    anchors
        .provenance
        .iter()
        .map(|p| TraceAnchor {
            entity_id: p.entity.0,
            name: g.entity_name(p.entity).to_string(),
            mention: p.mention.clone(),
            similarity: p.similarity,
        })
        .collect()
}

fn push_timing(durations: &mut Vec<StageTiming>, stage: Stage, started: Instant) {
    durations.push(StageTiming {
        stage: stage.to_string(),
        millis: started.elapsed().as_secs_f64() * 1e3,
    });
}

/// One ablation's traces, one per query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRun {
    pub name: String,
    pub traces: Vec<PipelineTrace>,
}

/// Run every query under all six stage configurations. A shared hypothesis
/// cache guarantees each query's draft is generated at most once across the
/// whole suite, so the ablations differ only in retrieval.
pub fn run_ablation_suite(
    queries: &[String],
    base: &PipelineConfig,
    deps: &PipelineDeps<'_>,
) -> Result<Vec<AblationRun>, PipelineError> {
    let local_cache;
    let mut deps = *deps;
    if deps.ho_cache.is_none() {
        local_cache = HoCache::in_memory();
        deps.ho_cache = Some(&local_cache);
    }

    let mut runs = Vec::with_capacity(Ablation::ALL.len());
    for ablation in Ablation::ALL {
        let cfg = ablation.apply(base);
        let mut traces = Vec::with_capacity(queries.len());
        for q in queries {
            traces.push(run(q, &cfg, &deps)?);
        }
        runs.push(AblationRun {
            name: ablation.name().to_string(),
            traces,
        });
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::WhitespaceTokenizer;
    use crate::kg::{ingest, EntityInput, IngestOptions, TripleInput};
    use crate::linker::build_index;
    use crate::providers::doubles::{
        GazetteerRecognizer, HashEmbedder, ScriptedGenerator, TokenOverlapScorer,
    };

    struct Fixture {
        graph: KnowledgeGraph,
        index: EntityIndex,
        stopwords: HashSet<String>,
        embedder: HashEmbedder,
        scorer: TokenOverlapScorer,
        recognizer: GazetteerRecognizer,
        prompts: PromptSet,
    }

    use crate::linker::EntityIndex;

    impl Fixture {
        fn new() -> Self {
            let entities = vec![
                EntityInput::new("aspirin").with_description("a common analgesic"),
                EntityInput::new("fever"),
            ];
            let triples = vec![TripleInput::new("aspirin", "treats", "fever")];
            let graph = ingest(&entities, &triples, &IngestOptions::default()).unwrap();
            let embedder = HashEmbedder::new(16, 21);
            let index = build_index(&graph, &embedder).unwrap();
            Fixture {
                graph,
                index,
                stopwords: ["does".to_string(), "help".to_string(), "with".to_string()]
                    .into(),
                embedder,
                scorer: TokenOverlapScorer::new(),
                recognizer: GazetteerRecognizer::new(["aspirin", "fever"]),
                prompts: PromptSet::default(),
            }
        }

        fn deps<'a>(&'a self, generator: &'a ScriptedGenerator) -> PipelineDeps<'a> {
            PipelineDeps {
                graph: &self.graph,
                index: &self.index,
                stopwords: &self.stopwords,
                tokenizer: &WhitespaceTokenizer,
                generator,
                embedder: &self.embedder,
                scorer: &self.scorer,
                recognizer: &self.recognizer,
                prompts: &self.prompts,
                ho_cache: None,
            }
        }
    }

    const QUERY: &str = "does aspirin help with fever";

    fn scripted_generator(fx: &Fixture) -> ScriptedGenerator {
        // Script the hypothesis; the reader prompt depends on retrieval, so
        // tests that need a scripted answer construct it explicitly.
        let ho_prompt = fx.prompts.render_ho(QUERY).unwrap();
        ScriptedGenerator::new("generic completion")
            .with_response(&ho_prompt, "aspirin is known to reduce fever")
    }

    #[test]
    fn full_run_walks_all_stages() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let trace = run(QUERY, &PipelineConfig::default(), &fx.deps(&generator)).unwrap();

        assert_eq!(trace.hypothesis_output, "aspirin is known to reduce fever");
        assert_eq!(trace.mentions, vec!["aspirin", "fever"]);
        assert_eq!(trace.mention_source_counts, (2, 2));
        assert_eq!(trace.anchors.len(), 2);
        assert_eq!(trace.chain_counts.capped, 1);
        assert_eq!(trace.chain_counts.pruned, 1);
        assert_eq!(trace.pruned_chains[0].text, "aspirin → treats → fever");
        assert!(trace
            .reader_prompt
            .contains("aspirin → treats → fever | aspirin: a common analgesic."));
        assert_eq!(trace.answer, "generic completion");
        assert_eq!(generator.calls(), 2);
        assert_eq!(trace.durations.len(), 6);
    }

    #[test]
    fn scripted_reader_reply_round_trips() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        // First run to learn the reader prompt, then script it.
        let trace = run(QUERY, &PipelineConfig::default(), &fx.deps(&generator)).unwrap();
        let generator =
            scripted_generator(&fx).with_response(&trace.reader_prompt, "take aspirin");
        let trace = run(QUERY, &PipelineConfig::default(), &fx.deps(&generator)).unwrap();
        assert_eq!(trace.answer, "take aspirin");
    }

    #[test]
    fn determinism_across_runs() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let deps = fx.deps(&generator);
        let cfg = PipelineConfig::default();
        let first = run(QUERY, &cfg, &deps).unwrap().without_durations();
        for _ in 0..4 {
            let again = run(QUERY, &cfg, &deps).unwrap().without_durations();
            assert_eq!(
                serde_json::to_string(&first).unwrap(),
                serde_json::to_string(&again).unwrap()
            );
        }
    }

    #[test]
    fn without_ho_uses_query_mentions_only() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let cfg = Ablation::WithoutHo.apply(&PipelineConfig::default());
        let trace = run(QUERY, &cfg, &fx.deps(&generator)).unwrap();
        assert!(trace.hypothesis_output.is_empty());
        assert_eq!(trace.mention_source_counts.1, 0);
        assert_eq!(generator.calls(), 1);
    }

    #[test]
    fn without_reranker_takes_search_order_without_scorer_calls() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let cfg = Ablation::WithoutReranker.apply(&PipelineConfig::default());
        let trace = run(QUERY, &cfg, &fx.deps(&generator)).unwrap();
        assert_eq!(trace.chain_counts.pruned, 1);
        assert_eq!(fx.scorer.calls(), 0);
        assert!(trace.pruned_chains.iter().all(|c| c.score == 0.0));
    }

    #[test]
    fn without_chains_sends_anchor_descriptions() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let cfg = Ablation::WithoutChains.apply(&PipelineConfig::default());
        let trace = run(QUERY, &cfg, &fx.deps(&generator)).unwrap();
        assert_eq!(trace.chain_counts.capped, 0);
        assert!(trace.reader_prompt.contains("aspirin: a common analgesic."));
        assert!(!trace.reader_prompt.contains("→"));
    }

    #[test]
    fn without_description_drops_suffixes() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let cfg = Ablation::WithoutDescription.apply(&PipelineConfig::default());
        let trace = run(QUERY, &cfg, &fx.deps(&generator)).unwrap();
        assert!(trace.reader_prompt.contains("aspirin → treats → fever."));
        assert!(!trace.reader_prompt.contains(" | "));
    }

    #[test]
    fn without_fragment_uses_single_whole_text_fragment() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let cfg = Ablation::WithoutFragment.apply(&PipelineConfig::default());
        let trace = run(QUERY, &cfg, &fx.deps(&generator)).unwrap();
        assert_eq!(trace.fragment_count, 1);
    }

    #[test]
    fn empty_hypothesis_degrades_gracefully() {
        let fx = Fixture::new();
        let ho_prompt = fx.prompts.render_ho(QUERY).unwrap();
        let generator = ScriptedGenerator::new("answer").with_response(&ho_prompt, "");
        let trace = run(QUERY, &PipelineConfig::default(), &fx.deps(&generator)).unwrap();
        assert!(trace.hypothesis_output.is_empty());
        assert_eq!(trace.mention_source_counts, (2, 0));
    }

    #[test]
    fn unlinkable_query_yields_sentinel_prompt() {
        let fx = Fixture::new();
        let generator = ScriptedGenerator::new("answer");
        let trace = run(
            "nothing relevant here",
            &PipelineConfig::default(),
            &fx.deps(&generator),
        )
        .unwrap();
        assert!(trace.anchors.is_empty());
        assert!(trace
            .reader_prompt
            .contains("The retrieved knowledge chains are: (none)"));
        assert_eq!(trace.answer, "answer");
    }

    #[test]
    fn stage_isolation_downstream_flags_do_not_change_upstream() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let deps = fx.deps(&generator);
        let full = run(QUERY, &PipelineConfig::default(), &deps).unwrap();
        let no_rerank = run(
            QUERY,
            &Ablation::WithoutReranker.apply(&PipelineConfig::default()),
            &deps,
        )
        .unwrap();
        assert_eq!(full.hypothesis_output, no_rerank.hypothesis_output);
        assert_eq!(full.mentions, no_rerank.mentions);
        assert_eq!(full.anchors, no_rerank.anchors);
        assert_eq!(full.chain_counts.capped, no_rerank.chain_counts.capped);
    }

    #[test]
    fn ho_cache_dedups_hypothesis_generation() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let cache = HoCache::in_memory();
        let mut deps = fx.deps(&generator);
        deps.ho_cache = Some(&cache);
        let cfg = PipelineConfig::default();
        run(QUERY, &cfg, &deps).unwrap();
        run(QUERY, &cfg, &deps).unwrap();
        // 2 runs: 1 hypothesis call + 2 reader calls.
        assert_eq!(generator.calls(), 3);
    }

    #[test]
    fn ho_cache_persists_across_instances() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ho.jsonl");
        let cache = HoCache::at_path(path.clone()).unwrap();
        cache.put("k1".to_string(), "v1".to_string());
        drop(cache);
        let reopened = HoCache::at_path(path).unwrap();
        assert_eq!(reopened.get("k1").as_deref(), Some("v1"));
    }

    #[test]
    fn ablation_suite_runs_six_configs_and_shares_ho() {
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let queries = vec![QUERY.to_string(), "fever threshold".to_string()];
        let runs = run_ablation_suite(&queries, &PipelineConfig::default(), &fx.deps(&generator))
            .unwrap();
        assert_eq!(runs.len(), 6);
        assert_eq!(runs.iter().map(|r| r.traces.len()).sum::<usize>(), 12);
        assert_eq!(runs[0].name, "full");

        // Per query: 1 shared hypothesis call, plus one reader call per
        // configuration (the w/o-HO config skips the hypothesis).
        let expected = 2 * (1 + 6);
        assert_eq!(generator.calls(), expected);

        let wo_ho = runs.iter().find(|r| r.name == "w/o-HO").unwrap();
        assert!(wo_ho.traces.iter().all(|t| t.hypothesis_output.is_empty()));
    }

    #[test]
    fn ablation_parsing_accepts_both_spellings() {
        assert_eq!(Ablation::parse("w/o-HO"), Some(Ablation::WithoutHo));
        assert_eq!(Ablation::parse("wo-chains"), Some(Ablation::WithoutChains));
        assert_eq!(Ablation::parse("FULL"), Some(Ablation::Full));
        assert_eq!(Ablation::parse("bogus"), None);
    }

    #[test]
    fn defaults_are_pinned() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.top_k, 10);
        assert!((cfg.delta - 0.7).abs() < 1e-12);
        assert_eq!(cfg.lc, 10);
        assert_eq!(cfg.oc, 4);
        assert_eq!(cfg.min_hops, 1);
        assert_eq!((cfg.per_pair_cap, cfg.global_cap), (200, 5000));
        assert_eq!(cfg.generation.max_tokens, 500);
        assert!((cfg.generation.temperature - 0.6).abs() < 1e-12);
        assert!(cfg.use_ho && cfg.use_fragments && cfg.use_descriptions);
        assert!(cfg.use_chains && cfg.use_reranker);
    }

    #[test]
    fn config_validation_rejects_bad_windows() {
        let cfg = PipelineConfig {
            oc: 10,
            lc: 10,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            delta: 1.5,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn error_carries_stage_name() {
        struct FailingRecognizer;
        impl EntityRecognizer for FailingRecognizer {
            fn recognize(
                &self,
                _text: &str,
            ) -> Result<Vec<crate::providers::RecognizedEntity>, crate::providers::ProviderError>
            {
                Err(crate::providers::ProviderError::Transport {
                    endpoint: "test".to_string(),
                    message: "down".to_string(),
                })
            }
        }
        let fx = Fixture::new();
        let generator = scripted_generator(&fx);
        let mut deps = fx.deps(&generator);
        deps.recognizer = &FailingRecognizer;
        let err = run(QUERY, &PipelineConfig::default(), &deps).unwrap_err();
        assert_eq!(err.stage_name(), Some(Stage::Extraction));
    }
}

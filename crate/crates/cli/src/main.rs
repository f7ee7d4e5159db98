//! `hykge`: ingest a knowledge graph, build the entity index, answer
//! queries through the retrieval pipeline, evaluate on Q&A datasets, and
//! serve the HTTP API.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hykge_core::eval::{
    bleu, exact_match, extract_choice_letters, load_mcq_jsonl, load_openqa_jsonl,
    partial_correct, rouge_recall, MetricReport, RunScores,
};
use hykge_core::kg::{ingest_files, read_snapshot, write_snapshot, IngestOptions};
use hykge_core::linker::load_or_build;
use hykge_core::pipeline::{run, Ablation};

use hykge_cli::config::AppConfig;
use hykge_cli::state::{LoadedState, ResourceOverrides};
use hykge_cli::{providers, service, CliError};

#[derive(Parser)]
#[command(
    name = "hykge",
    about = "Knowledge-graph retrieval-augmented generation engine",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a binary graph snapshot from entity and triple files.
    Ingest {
        /// Entities file (JSON lines: name, description?, type?).
        #[arg(long)]
        entities: PathBuf,
        /// Triples file (JSON lines with head/relation/tail, or 3-column TSV).
        #[arg(long)]
        triples: PathBuf,
        /// Output snapshot path.
        #[arg(long)]
        out: PathBuf,
        /// Create entities for unresolved triple endpoints instead of failing.
        #[arg(long)]
        auto_create: bool,
    },
    /// Build (or refresh) the entity embedding index for a snapshot.
    Index {
        #[arg(long)]
        snapshot: PathBuf,
        /// Index cache path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Answer one question through the full pipeline.
    Query {
        question: String,
        #[command(flatten)]
        common: CommonArgs,
        /// Print the full trace as JSON after the answer.
        #[arg(long)]
        trace: bool,
        /// Run one ablation configuration (full, w/o-HO, w/o-Chains,
        /// w/o-Description, w/o-Fragment, w/o-Reranker).
        #[arg(long)]
        ablation: Option<String>,
    },
    /// Score a JSONL dataset through the pipeline.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        kind: DatasetKind,
        /// Repeated runs to aggregate (mean ± std across seeds).
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Write the full JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Serve the HTTP API.
    Serve {
        /// Listen address; overrides [service] addr.
        #[arg(long)]
        addr: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct ProviderArgs {
    /// Use deterministic offline provider doubles instead of the
    /// HYKGE_*_URL HTTP providers.
    #[arg(long)]
    doubles: bool,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Entity index cache path.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[command(flatten)]
    providers: ProviderArgs,
    /// Override the configured maximum chain hops.
    #[arg(long)]
    k: Option<usize>,
    /// Override the configured rerank cutoff.
    #[arg(long)]
    top_k: Option<usize>,
    /// Override the configured linking threshold.
    #[arg(long)]
    delta: Option<f64>,
    /// Override the configured fragment window.
    #[arg(long)]
    lc: Option<usize>,
    /// Override the configured fragment overlap.
    #[arg(long)]
    oc: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    Mcq,
    Openqa,
}

impl CommonArgs {
    fn load_state(&self) -> Result<(AppConfig, LoadedState), CliError> {
        let mut config = AppConfig::load(self.config.as_deref())?;
        if let Some(k) = self.k {
            config.pipeline.k = k;
        }
        if let Some(top_k) = self.top_k {
            config.pipeline.top_k = top_k;
        }
        if let Some(delta) = self.delta {
            config.pipeline.delta = delta;
        }
        if let Some(lc) = self.lc {
            config.pipeline.lc = lc;
        }
        if let Some(oc) = self.oc {
            config.pipeline.oc = oc;
        }
        config
            .pipeline
            .validate()
            .map_err(|e| CliError::format(e.to_string()))?;
        let overrides = ResourceOverrides {
            snapshot: self.snapshot.clone(),
            index: self.index.clone(),
            stopwords: self.stopwords.clone(),
        };
        let state = LoadedState::load(&config, &overrides, self.providers.doubles)?;
        Ok((config, state))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest {
            entities,
            triples,
            out,
            auto_create,
        } => cmd_ingest(&entities, &triples, &out, auto_create),
        Command::Index {
            snapshot,
            out,
            providers,
        } => cmd_index(&snapshot, &out, providers.doubles),
        Command::Query {
            question,
            common,
            trace,
            ablation,
        } => cmd_query(&question, &common, trace, ablation.as_deref()),
        Command::Eval {
            dataset,
            kind,
            seeds,
            out,
            common,
        } => cmd_eval(&dataset, kind, seeds, out.as_deref(), &common),
        Command::Serve { addr, common } => cmd_serve(addr.as_deref(), &common),
    }
}

fn cmd_ingest(
    entities: &std::path::Path,
    triples: &std::path::Path,
    out: &std::path::Path,
    auto_create: bool,
) -> Result<(), CliError> {
    let opts = IngestOptions {
        auto_create_entities: auto_create,
    };
    let graph = ingest_files(entities, triples, &opts)?;
    write_snapshot(&graph, out)?;
    println!("entities: {}", graph.entity_count());
    println!("relations: {}", graph.relation_count());
    println!("triplets: {}", graph.triplet_count());
    println!("snapshot: {}", out.display());
    Ok(())
}

fn cmd_index(
    snapshot: &std::path::Path,
    out: &std::path::Path,
    doubles: bool,
) -> Result<(), CliError> {
    let graph = read_snapshot(snapshot)?;
    let bundle = providers::build_bundle(doubles, Some(&graph))?;
    let (index, rebuilt) =
        load_or_build(out, &graph, bundle.embedder.as_ref()).map_err(CliError::from)?;
    println!(
        "index: {} vectors, dim {}, {}",
        index.count(),
        index.dim(),
        if rebuilt { "rebuilt" } else { "cached" }
    );
    Ok(())
}

fn cmd_query(
    question: &str,
    common: &CommonArgs,
    trace: bool,
    ablation: Option<&str>,
) -> Result<(), CliError> {
    let (_, state) = common.load_state()?;
    let mut cfg = state.pipeline.clone();
    if let Some(name) = ablation {
        let parsed = Ablation::parse(name)
            .ok_or_else(|| CliError::format(format!("unknown ablation {name:?}")))?;
        cfg = parsed.apply(&cfg);
    }
    let result = run(question, &cfg, &state.deps())?;
    println!("{}", result.answer);
    if trace {
        let json = serde_json::to_string_pretty(&result)
            .map_err(|e| CliError::other(e.to_string()))?;
        println!("{json}");
    }
    Ok(())
}

fn cmd_eval(
    dataset: &std::path::Path,
    kind: DatasetKind,
    seeds: u64,
    out: Option<&std::path::Path>,
    common: &CommonArgs,
) -> Result<(), CliError> {
    let (_, state) = common.load_state()?;
    let cfg = state.pipeline.clone();
    let deps = state.deps();
    let tokenizer = state.tokenizer.as_ref();

    let mut runs = Vec::new();
    for seed in 0..seeds.max(1) {
        let mut scores = RunScores::new(seed);
        match kind {
            DatasetKind::Mcq => {
                let items =
                    load_mcq_jsonl(dataset).map_err(|e| CliError::format(e.to_string()))?;
                for item in &items {
                    let trace = run(&item.as_query_text(), &cfg, &deps)?;
                    let pred: BTreeSet<char> =
                        extract_choice_letters(&trace.answer, &item.allowed_letters());
                    scores.record(&item.id, "em", f64::from(exact_match(&pred, &item.gold)));
                    scores.record(
                        &item.id,
                        "pcr",
                        f64::from(partial_correct(&pred, &item.gold)),
                    );
                }
            }
            DatasetKind::Openqa => {
                let items =
                    load_openqa_jsonl(dataset).map_err(|e| CliError::format(e.to_string()))?;
                for item in &items {
                    let trace = run(&item.as_query_text(), &cfg, &deps)?;
                    let rouge = rouge_recall(&trace.answer, &item.reference, tokenizer)
                        .map_err(|e| CliError::format(e.to_string()))?;
                    scores.record(&item.id, "rouge_r", rouge);
                    scores.record(
                        &item.id,
                        "bleu1",
                        bleu(&trace.answer, &item.reference, 1, tokenizer),
                    );
                    scores.record(
                        &item.id,
                        "bleu4",
                        bleu(&trace.answer, &item.reference, 4, tokenizer),
                    );
                }
            }
        }
        runs.push(scores);
    }

    let report = MetricReport::from_runs(runs);
    print!("{}", report.render_table());
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::other(e.to_string()))?;
        std::fs::write(path, json)
            .map_err(|e| CliError::format(format!("cannot write {}: {e}", path.display())))?;
        println!("report: {}", path.display());
    }
    Ok(())
}

fn cmd_serve(addr: Option<&str>, common: &CommonArgs) -> Result<(), CliError> {
    let (config, state) = common.load_state()?;
    let addr = addr.unwrap_or(&config.service.addr).to_string();
    let service_state = service::ServiceState::new(
        config.service.trace_ring_capacity,
        config.service.trace_spill_path.clone(),
    );
    service_state.set_loaded(state);

    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::other(e.to_string()))?;
    runtime
        .block_on(service::serve(service_state, &addr))
        .map_err(|e| CliError::other(e.to_string()))
}

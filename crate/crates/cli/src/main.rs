use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use trirag::corpus::{load_chunks, load_corpus, CorpusFormat};
use trirag::eval::{load_qa, run_benchmark, BenchmarkOptions, Normalizer};
use trirag::graph::{self, build_index, build_index_from_chunks, IndexConfig, MultipartiteGraph};
use trirag::providers::{Providers, ProvidersConfig};
use trirag::retrieval::{generate_answer, retrieve, RetrievalParams};
use trirag::selection::SelectionMetric;

#[derive(Parser)]
#[command(name = "trirag", version, about = "Graph-indexed retrieval and QA benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index directory from a corpus.
    Index(IndexArgs),
    /// Retrieve chunks for one question, optionally answering it.
    Query(QueryArgs),
    /// Run a question set against an index.
    Eval(EvalArgs),
    /// Print node, edge and degree counts of an index.
    Stats {
        #[arg(long)]
        index: PathBuf,
    },
    /// Print the neighborhood of a unit, entity or chunk.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct ProviderArgs {
    /// Provider configuration (JSON). Without it, mock providers are used.
    #[arg(long)]
    providers: Option<PathBuf>,
    /// Seed for the mock embedder.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    #[arg(long = "top-n", default_value_t = 5)]
    top_n: usize,
}

impl SearchArgs {
    fn params(&self) -> RetrievalParams {
        RetrievalParams {
            k: self.k,
            depth: self.depth,
            beam: self.beam,
            top_n: self.top_n,
        }
    }
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// jsonl-docs or jsonl-chunks
    #[arg(long, default_value = "jsonl-docs")]
    format: CorpusFormat,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long = "chunk-tokens", default_value_t = trirag::corpus::DEFAULT_CHUNK_TOKENS)]
    chunk_tokens: usize,
    /// bleu or cosine
    #[arg(long = "selection-metric", default_value = "bleu")]
    selection_metric: SelectionMetric,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    question: String,
    #[command(flatten)]
    search: SearchArgs,
    /// Write the expansion trace here as JSONL.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also generate an answer from the retrieved chunks.
    #[arg(long)]
    answer: bool,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    /// JSONL question set: {id, question, answers}
    #[arg(long)]
    qa: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Drop a/an/the when normalizing answers.
    #[arg(long = "drop-articles")]
    drop_articles: bool,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Target {
    #[arg(long)]
    unit: Option<String>,
    /// Entity id or surface form.
    #[arg(long)]
    entity: Option<String>,
    #[arg(long)]
    chunk: Option<String>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    target: Target,
}

fn providers(args: &ProviderArgs) -> anyhow::Result<Providers> {
    let mut cfg = match &args.providers {
        Some(path) => {
            ProvidersConfig::from_file(path).with_context(|| format!("reading provider config {}", path.display()))?
        }
        None => ProvidersConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.apply_env();
    if cfg.all_mock() {
        eprintln!("NOTICE: no model services configured; using the mock LLM, mock embedder and lexical re-ranker.");
        eprintln!("NOTICE: results are for plumbing checks only. Pass --providers <config.json> for real services.");
    }
    Ok(Providers::from_config(&cfg)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    writeln!(lock)?;
    Ok(())
}

fn open_index(dir: &Path, p: &Providers) -> anyhow::Result<MultipartiteGraph> {
    let g = graph::load(dir).with_context(|| format!("loading index {}", dir.display()))?;
    if g.embedder() != p.embedder.name() {
        log::warn!(
            "index was embedded with `{}` but queries use `{}`",
            g.embedder(),
            p.embedder.name()
        );
    }
    Ok(g)
}

fn index(args: IndexArgs) -> anyhow::Result<()> {
    let p = providers(&args.providers)?;
    let cfg = IndexConfig {
        alpha: args.alpha,
        chunk_tokens: args.chunk_tokens,
        selection_metric: args.selection_metric,
        ..IndexConfig::default()
    };
    let build = match args.format {
        CorpusFormat::JsonlDocs => build_index(&load_corpus(&args.corpus, args.format)?, &cfg, &p)?,
        CorpusFormat::JsonlChunks => {
            let chunks = load_chunks(&args.corpus, args.chunk_tokens, p.tokenizer.as_ref())?;
            build_index_from_chunks(chunks, &cfg, &p)?
        }
    };
    let manifest = graph::persist(&build.graph, &args.out)?;
    write_json(&args.out.join("selection-report.json"), &build.selection)?;
    write_jsonl(&args.out.join("extraction-log.jsonl"), &build.extraction_log)?;
    let cost = p.ledger.report();
    write_json(&args.out.join("cost-report.json"), &cost)?;
    print_json(&json!({
        "index": args.out,
        "counts": manifest.counts,
        "core_chunks": build.selection.core().len(),
        "indexing_llm_calls": cost.indexing_llm_calls,
        "indexing_tokens": cost.indexing_total(),
    }))
}

fn query(args: QueryArgs) -> anyhow::Result<()> {
    let p = providers(&args.providers)?;
    let g = open_index(&args.index, &p)?;
    let result = retrieve(&g, &p, &args.question, &args.search.params())?;
    if let Some(path) = &args.trace {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = std::io::BufWriter::new(file);
        result.write_trace(&mut w)?;
        w.flush()?;
    }
    let answer = if args.answer {
        let texts: Vec<&str> = result.chunks.iter().map(|c| c.text.as_str()).collect();
        Some(generate_answer(&args.question, &texts, &p.llm)?)
    } else {
        None
    };
    print_json(&json!({
        "question": result.question,
        "anchors": result.anchors,
        "chunks": result.chunks,
        "collected_states": result.collected.len(),
        "diagnostic": result.diagnostic,
        "answer": answer,
        "cost": p.ledger.report(),
    }))
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let p = providers(&args.providers)?;
    let g = open_index(&args.index, &p)?;
    let items = load_qa(&args.qa)?;
    let opts = BenchmarkOptions {
        workers: args.workers,
        normalizer: Normalizer {
            drop_articles: args.drop_articles,
        },
    };
    let ev = run_benchmark(&g, &items, &args.search.params(), &p, &opts)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_json(&args.out.join("eval-report.json"), &ev.report)?;
    write_jsonl(&args.out.join("per-item.jsonl"), &ev.per_item)?;
    write_json(&args.out.join("cost-report.json"), &ev.report.cost)?;
    print_json(&json!({
        "items": ev.report.items,
        "errors": ev.report.errors,
        "accuracy": ev.report.accuracy,
        "f1": ev.report.f1,
        "out": args.out,
    }))
}

fn stats(index: &Path) -> anyhow::Result<()> {
    let g = graph::load(index).with_context(|| format!("loading index {}", index.display()))?;
    print_json(&g.stats())
}

fn inspect(args: InspectArgs) -> anyhow::Result<()> {
    let g = graph::load(&args.index).with_context(|| format!("loading index {}", args.index.display()))?;
    let t = &args.target;
    let value = if let Some(id) = &t.unit {
        let u = g.unit_ix(id)?;
        json!({
            "unit": g.unit(u),
            "chunk": g.chunk(g.parent(u)).chunk_id,
            "entities": g.entity_neighbors(u).map(|e| g.entity(e)).collect::<Vec<_>>(),
        })
    } else if let Some(key) = &t.entity {
        let e = match g.entity_ix(key) {
            Ok(e) => e,
            Err(err) => match g.find_entity(key) {
                Some(e) => e,
                None => return Err(err.into()),
            },
        };
        json!({
            "entity": g.entity(e),
            "units": g.unit_neighbors(e).map(|u| g.unit(u)).collect::<Vec<_>>(),
        })
    } else if let Some(id) = &t.chunk {
        let c = g.chunk_ix(id)?;
        json!({
            "chunk": g.chunk(c),
            "units": g.children(c).map(|u| g.unit(u)).collect::<Vec<_>>(),
        })
    } else {
        bail!("one of --unit, --entity or --chunk is required");
    };
    print_json(&value)
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    use trirag::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Io { .. }) => "io",
        Some(E::MalformedRecord { .. } | E::Json(_)) => "malformed-input",
        Some(E::DuplicateId(_)) => "duplicate-id",
        Some(E::UnknownId { .. }) => "unknown-id",
        Some(E::InvalidArgument(_) | E::UnsupportedFormat(_)) => "invalid-argument",
        Some(E::PromptTooLong { .. }) => "prompt-too-long",
        Some(E::Transport { .. }) => "transport",
        Some(E::Protocol { .. }) => "protocol",
        Some(E::DimensionMismatch { .. }) => "dimension-mismatch",
        Some(E::VersionMismatch { .. }) => "version-mismatch",
        Some(E::Checksum { .. }) => "checksum",
        Some(E::Invariant(_)) => "invariant",
        Some(E::BuildAborted { .. }) => "build-aborted",
        Some(E::SearchAborted { .. }) => "search-aborted",
        None => "error",
    }
}

fn report(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return report("usage", e.to_string().trim_end().to_string(), 2),
    };
    let outcome = match cli.command {
        Command::Index(a) => index(a),
        Command::Query(a) => query(a),
        Command::Eval(a) => eval(a),
        Command::Stats { index } => stats(&index),
        Command::Inspect(a) => inspect(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(error_kind(&e), format!("{e:#}"), 1),
    }
}

//! `ragpipe` command-line interface.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use ragpipe::corpus::{
    build_small2big, chunk_sentences, chunk_tokens, read_chunks, read_documents, validate_corpus, write_chunks,
    write_documents, Chunk, Document, DEFAULT_BIG_CHUNK, DEFAULT_OVERLAP, DEFAULT_SENTENCE_TARGET,
    DEFAULT_SMALL_CHUNK,
};
use ragpipe::dense::DenseIndex;
use ragpipe::eval::{latency_stats, percentile, render_markdown, MetricSpec, Qrels, DEFAULT_METRICS, DEFAULT_THRESHOLD};
use ragpipe::pipeline::{
    ablation_sweep, alpha_sweep, default_alpha_values, embedder, qrels_from_queries, read_queries, run_eval,
    sample_queries, CandidateCache, ChatSpec, Components, EmbedderSpec, EvalOptions, IndexLayout, Pipeline,
    PipelineConfig, ScorerSpec, TimingMode, BEST_PERFORMANCE,
};
use ragpipe::rerank::build_tilde_fallback;
use ragpipe::sparse::{build_sparse, Bm25Params, SparseIndex};
use ragpipe::transform::Query;

#[derive(Parser)]
#[command(name = "ragpipe", version, about = "Modular retrieval-augmented generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect documents from a JSONL file or a directory of .txt files.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split documents into retrieval chunks.
    Chunk {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ChunkMethod::Tokens)]
        method: ChunkMethod,
        /// Chunk size in tokens (small size for small2big, target for sentences).
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_OVERLAP)]
        overlap: usize,
        /// Big chunk size for small2big.
        #[arg(long, default_value_t = DEFAULT_BIG_CHUNK)]
        big: usize,
    },
    /// Build and persist the BM25 index.
    IndexSparse {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        k1: f64,
        #[arg(long, default_value_t = 0.4)]
        b: f64,
    },
    /// Embed chunks and persist the flat vector index.
    IndexDense {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Derive a TILDE likelihood index from a sparse index.
    TildeIndex {
        #[arg(long)]
        sparse: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer one query and print its trace as JSON.
    Query {
        #[arg(long)]
        index_dir: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long, default_value = "q")]
        id: String,
        #[arg(long)]
        task_label: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a query set and write a run directory.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        run_dir: PathBuf,
        /// Evaluate a seeded random subset of this many queries.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also evaluate single-module variations and write ablation.md.
        #[arg(long)]
        ablation: bool,
        /// Stop after retrieval and report retrieval metrics only.
        #[arg(long)]
        retrieval_only: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Retrieval metrics for several hybrid weights, retrieving once.
    SweepAlpha {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated α values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Directory holding cached first-stage lists.
        #[arg(long)]
        candidate_cache: Option<PathBuf>,
        /// Write the markdown table here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Time index searches and full pipeline runs.
    Bench {
        #[arg(long)]
        index_dir: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Passes over the query set for the search timings.
        #[arg(long, default_value_t = 3)]
        repeat: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ChunkMethod {
    Tokens,
    Sentences,
    Small2big,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    index_dir: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// TREC qrels; judgments default to each query's gold_doc_ids.
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Relevance grade at or above which a document counts as relevant.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u32,
    /// Comma-separated metrics such as map,ndcg@10,recall@50.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<MetricSpec>>,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration, optionally naming a preset to inherit from.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset used when no configuration file is given.
    #[arg(long, default_value = BEST_PERFORMANCE)]
    preset: String,
    /// Record zero latencies so repeated runs are byte-identical.
    #[arg(long)]
    logical_time: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// OpenAI-compatible base URL for the generator and assistant.
    #[arg(long, env = "RAGPIPE_LLM_URL")]
    llm_url: Option<String>,
    #[arg(long, env = "RAGPIPE_LLM_MODEL", default_value = "default")]
    llm_model: String,
    /// Embedding service base URL.
    #[arg(long, env = "RAGPIPE_EMBED_URL")]
    embed_url: Option<String>,
    #[arg(long, env = "RAGPIPE_EMBED_MODEL", default_value = "default")]
    embed_model: String,
    #[arg(long, env = "RAGPIPE_EMBED_DIM")]
    embed_dim: Option<usize>,
    /// Reranking service base URL.
    #[arg(long, env = "RAGPIPE_RERANK_URL")]
    rerank_url: Option<String>,
    #[arg(long, env = "RAGPIPE_RERANK_MODEL", default_value = "default")]
    rerank_model: String,
    /// Completion cache directory.
    #[arg(long, env = "RAGPIPE_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ragpipe::pipeline::preset(&self.preset)?,
        };
        if self.logical_time {
            cfg.timing = TimingMode::Logical;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        let b = &mut cfg.backends;
        if let Some(url) = &self.llm_url {
            let spec = ChatSpec::Openai {
                url: url.clone(),
                model: self.llm_model.clone(),
                api_key_env: None,
            };
            b.generator = spec.clone();
            b.assistant = spec;
        }
        if let Some(url) = &self.embed_url {
            let dim = self
                .embed_dim
                .context("--embed-dim (or RAGPIPE_EMBED_DIM) is required with a remote embedder")?;
            b.embedder = EmbedderSpec::Remote {
                url: url.clone(),
                model: self.embed_model.clone(),
                dim,
                api_key_env: None,
            };
        } else if let (Some(dim), EmbedderSpec::Deterministic { .. }) = (self.embed_dim, &b.embedder) {
            b.embedder = EmbedderSpec::Deterministic { dim };
        }
        if let Some(url) = &self.rerank_url {
            b.reranker = ScorerSpec::Remote {
                url: url.clone(),
                model: self.rerank_model.clone(),
                api_key_env: None,
            };
        }
        if self.cache_dir.is_some() {
            b.cache_dir = self.cache_dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, out } => ingest(&input, &out),
        Command::Chunk {
            docs,
            out,
            method,
            size,
            overlap,
            big,
        } => {
            let docs = read_documents(&docs)?;
            let mut chunks: Vec<Chunk> = Vec::new();
            for d in &docs {
                chunks.extend(match method {
                    ChunkMethod::Tokens => chunk_tokens(d, size.unwrap_or(DEFAULT_SMALL_CHUNK), overlap)?,
                    ChunkMethod::Sentences => chunk_sentences(d, size.unwrap_or(DEFAULT_SENTENCE_TARGET))?,
                    ChunkMethod::Small2big => {
                        build_small2big(d, size.unwrap_or(DEFAULT_SMALL_CHUNK), big, overlap)?.into_all()
                    }
                });
            }
            write_chunks(&out, &chunks)?;
            println!("{} chunks from {} documents", chunks.len(), docs.len());
            Ok(())
        }
        Command::IndexSparse { corpus, out, k1, b } => {
            let chunks = searchable(read_chunks(&corpus)?);
            let index = build_sparse(&chunks, Bm25Params { k1, b })?;
            index.save(&out)?;
            println!("indexed {} chunks, {} terms", index.len(), index.vocabulary_size());
            Ok(())
        }
        Command::IndexDense { corpus, out, config } => {
            let cfg = config.resolve()?;
            let chunks = searchable(read_chunks(&corpus)?);
            let backend = embedder(&cfg.backends.embedder)?;
            let items: Vec<(String, String)> = chunks.into_iter().map(|c| (c.id, c.text)).collect();
            let index = DenseIndex::build(backend.as_ref(), &items)?;
            index.save(&out)?;
            println!("embedded {} chunks (dim {}, {})", index.len(), index.dim(), index.backend_tag());
            Ok(())
        }
        Command::TildeIndex { sparse, out } => {
            let index = build_tilde_fallback(&SparseIndex::load(&sparse)?);
            index.save(&out)?;
            println!("wrote likelihoods for {} chunks", index.len());
            Ok(())
        }
        Command::Query {
            index_dir,
            text,
            id,
            task_label,
            config,
        } => {
            let pipeline = open(&config.resolve()?, &index_dir)?;
            let query = Query {
                task_label,
                ..Query::new(id, text)
            };
            let trace = pipeline.run(&query);
            println!("{}", serde_json::to_string_pretty(&trace)?);
            if let Some(e) = trace.error {
                bail!("stage {} failed: {}", e.stage, e.message);
            }
            Ok(())
        }
        Command::Eval {
            data,
            run_dir,
            sample,
            seed,
            ablation,
            retrieval_only,
            config,
        } => {
            let pipeline = open(&config.resolve()?, &data.index_dir)?;
            let (mut queries, mut issues) = read_queries(&data.queries)?;
            if let Some(n) = sample {
                queries = sample_queries(queries, n, seed);
            }
            let qrels = load_qrels(&data, &mut issues)?;
            let options = EvalOptions {
                generate: !retrieval_only,
                metrics: data.metrics.clone().unwrap_or_else(|| DEFAULT_METRICS.to_vec()),
            };
            for issue in &issues {
                warn!("skipped input line {}: {}", issue.line, issue.message);
            }
            let report = run_eval(&pipeline, &queries, qrels.as_ref(), issues, &options, &run_dir)?;
            print!("{}", report.to_markdown());
            if ablation {
                let table = ablation_sweep(&pipeline, &queries, qrels.as_ref(), &options)?;
                let md = table.to_markdown();
                fs::write(run_dir.join("ablation.md"), &md)?;
                fs::write(run_dir.join("ablation.json"), serde_json::to_string_pretty(&table)? + "\n")?;
                print!("\n{md}");
            }
            Ok(())
        }
        Command::SweepAlpha {
            data,
            values,
            candidate_cache,
            out,
            config,
        } => {
            let pipeline = open(&config.resolve()?, &data.index_dir)?;
            let (queries, mut issues) = read_queries(&data.queries)?;
            let qrels = load_qrels(&data, &mut issues)?.context("no qrels file and no gold_doc_ids in the queries")?;
            for issue in &issues {
                warn!("skipped input line {}: {}", issue.line, issue.message);
            }
            let cache = candidate_cache.map(CandidateCache::new).transpose()?;
            let metrics = data.metrics.clone().unwrap_or_else(|| DEFAULT_METRICS.to_vec());
            let values = values.unwrap_or_else(default_alpha_values);
            let rows = alpha_sweep(&pipeline, &values, &queries, &qrels, cache.as_ref(), &metrics)?;
            let md = render_markdown(&rows);
            if let Some(out) = out {
                fs::write(out, &md)?;
            }
            print!("{md}");
            Ok(())
        }
        Command::Bench {
            index_dir,
            queries,
            k,
            repeat,
            config,
        } => bench(&config.resolve()?, &index_dir, &queries, k, repeat),
    }
}

/// Chunks that are not small2big parents; parents are only expanded into.
fn searchable(chunks: Vec<Chunk>) -> Vec<Chunk> {
    let parents: std::collections::HashSet<String> = chunks.iter().filter_map(|c| c.parent_id.clone()).collect();
    chunks.into_iter().filter(|c| !parents.contains(&c.id)).collect()
}

fn open(cfg: &PipelineConfig, index_dir: &Path) -> Result<Pipeline> {
    let components = Components::load(cfg, &IndexLayout::new(index_dir))
        .with_context(|| format!("loading indices from {}", index_dir.display()))?;
    Ok(Pipeline::new(cfg.clone(), Arc::new(components))?)
}

fn load_qrels(data: &DataArgs, issues: &mut Vec<ragpipe::eval::LineIssue>) -> Result<Option<Qrels>> {
    match &data.qrels {
        Some(path) => {
            let (qrels, bad) = Qrels::load(path, data.threshold)?;
            issues.extend(bad);
            Ok(Some(qrels))
        }
        None => {
            let (queries, _) = read_queries(&data.queries)?;
            Ok(qrels_from_queries(&queries).map(|q| q.with_threshold(data.threshold)))
        }
    }
}

fn ingest(input: &Path, out: &Path) -> Result<()> {
    let docs = if input.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "txt"));
        paths.sort();
        let mut docs = Vec::new();
        for p in paths {
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            if text.trim().is_empty() {
                warn!("skipping empty file {}", p.display());
                continue;
            }
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            docs.push(Document {
                source: Some(p.display().to_string()),
                ..Document::new(id, text.trim_end())
            });
        }
        docs
    } else {
        read_documents(input)?
    };
    validate_corpus(&docs)?;
    write_documents(out, &docs)?;
    println!("{} documents", docs.len());
    Ok(())
}

fn bench(cfg: &PipelineConfig, index_dir: &Path, queries: &Path, k: usize, repeat: usize) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.timing = TimingMode::Wall;
    let pipeline = open(&cfg, index_dir)?;
    let (queries, _) = read_queries(queries)?;
    if queries.is_empty() {
        bail!("no queries to benchmark");
    }
    let c = pipeline.components();
    let mut search: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for _ in 0..repeat.max(1) {
        for q in &queries {
            if let Some(index) = &c.sparse {
                let t = Instant::now();
                index.search(&q.id, &q.text, k)?;
                search.entry("sparse_search").or_default().push(t.elapsed().as_secs_f64());
            }
            if let (Some(index), Some(e)) = (&c.dense, &c.embedder) {
                let t = Instant::now();
                let v = e.embed_one(&q.text)?;
                let embedded = t.elapsed().as_secs_f64();
                index.search(&q.id, &v, k)?;
                search.entry("embed_query").or_default().push(embedded);
                search.entry("dense_search").or_default().push(t.elapsed().as_secs_f64() - embedded);
            }
        }
    }
    let searches: BTreeMap<&str, serde_json::Value> = search
        .iter()
        .map(|(name, v)| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (*name, json!({"mean": mean, "p50": percentile(v, 50.0), "p95": percentile(v, 95.0), "samples": v.len()}))
        })
        .collect();
    info!("running {} queries through the pipeline", queries.len());
    let traces: Vec<_> = queries.iter().map(|q| pipeline.run(q)).collect();
    let stats = latency_stats(&traces.iter().map(|t| t.latency_map()).collect::<Vec<_>>());
    let out = json!({"k": k, "chunks": c.store.len(), "search": searches, "pipeline": stats});
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

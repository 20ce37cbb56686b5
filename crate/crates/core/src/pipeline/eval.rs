use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{EvalUnit, JudgeKind, PipelineConfig, RerankerKind, RetrievalMode, SummarizerKind, TimingMode};
use super::run::{FirstStage, Pipeline, PipelineTrace, StopAfter, SubRetrieval};
use crate::corpus::{sentences, ChunkStore};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy_with_extraction, context_relevancy, latency_stats, lenient_em, rag_score, render_markdown,
    retrieval_metrics, retrieval_similarity, token_f1, AnswerPatterns, CapabilityJudge, EvalReport, JudgeMetric,
    LineIssue, LlmJudge, MetricSpec, OverlapJudge, Qrels, RagComponents, RelevanceJudge, ReportRow,
    DEFAULT_METRICS,
};
use crate::fusion::ALPHA_SWEEP;
use crate::postprocess::RepackMode;
use crate::scored::{ScoredEntry, ScoredList};
use crate::transform::Query;

/// Reads queries JSONL, skipping (and reporting) malformed lines and
/// queries with empty text.
pub fn read_queries(path: &Path) -> Result<(Vec<Query>, Vec<LineIssue>)> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut queries = Vec::new();
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let issue = |message: String| LineIssue { line: n + 1, message };
        match serde_json::from_str::<Query>(&line) {
            Ok(q) if q.text.trim().is_empty() => issues.push(issue("query text is empty".into())),
            Ok(q) if !seen.insert(q.id.clone()) => issues.push(issue(format!("duplicate query id `{}`", q.id))),
            Ok(q) => queries.push(q),
            Err(e) => issues.push(issue(e.to_string())),
        }
    }
    Ok((queries, issues))
}

/// Up to `n` queries drawn without replacement by a generator seeded with
/// `seed`, returned in query-id order.
pub fn sample_queries(mut queries: Vec<Query>, n: usize, seed: u64) -> Vec<Query> {
    queries.sort_by(|a, b| a.id.cmp(&b.id));
    if n >= queries.len() {
        return queries;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, queries.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| queries[i].clone()).collect()
}

/// Grade-1 judgments from each query's `gold_doc_ids`.
pub fn qrels_from_queries(queries: &[Query]) -> Option<Qrels> {
    let mut qrels = Qrels::new(crate::eval::DEFAULT_THRESHOLD);
    for q in queries {
        for d in &q.gold_doc_ids {
            qrels.insert(q.id.clone(), d.clone(), 1);
        }
    }
    (!qrels.judgments.is_empty()).then_some(qrels)
}

/// Re-keys a chunk ranking by document id, keeping each document's best
/// chunk.
pub fn to_eval_unit(list: &ScoredList, store: &ChunkStore, unit: EvalUnit) -> ScoredList {
    match unit {
        EvalUnit::Chunk => list.clone(),
        EvalUnit::Doc => {
            let mut seen = HashSet::new();
            let mut out = list.clone();
            out.entries = list
                .entries
                .iter()
                .filter_map(|e| {
                    let doc = store.doc_id(&e.chunk).unwrap_or(&e.chunk).to_string();
                    seen.insert(doc.clone()).then(|| ScoredEntry::new(doc, e.score, e.provenance))
                })
                .collect();
            out
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Run every stage; when false only retrieval runs and only retrieval
    /// metrics are reported.
    pub generate: bool,
    pub metrics: Vec<MetricSpec>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            generate: true,
            metrics: DEFAULT_METRICS.to_vec(),
        }
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn answer_patterns(task: Option<&str>) -> Option<AnswerPatterns> {
    match task?.to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
        "multiple_choice" | "commonsense" | "commonsense_reasoning" | "medical" | "medical_qa" => {
            Some(AnswerPatterns::multiple_choice())
        }
        "fact_checking" | "fact_check" | "true_false" => Some(AnswerPatterns::true_false()),
        _ => None,
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

struct Judges<'a> {
    relevance: &'a dyn RelevanceJudge,
    capability: &'a dyn CapabilityJudge,
}

/// Runs every query through `pipeline` on a bounded pool and aggregates
/// the report. Traces come back in query-id order.
pub fn evaluate(
    pipeline: &Pipeline,
    queries: &[Query],
    qrels: Option<&Qrels>,
    options: &EvalOptions,
) -> Result<(EvalReport, Vec<PipelineTrace>)> {
    let stop = if options.generate { StopAfter::Generate } else { StopAfter::Retrieve };
    let mut ordered: Vec<&Query> = queries.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let traces: Vec<PipelineTrace> = in_pool(pipeline.config().workers, || {
        ordered.par_iter().map(|q| pipeline.run_to(q, stop)).collect()
    })?;
    let report = aggregate(pipeline, &ordered, &traces, qrels, options)?;
    Ok((report, traces))
}

fn aggregate(
    pipeline: &Pipeline,
    queries: &[&Query],
    traces: &[PipelineTrace],
    qrels: Option<&Qrels>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let cfg = pipeline.config();
    let c = pipeline.components();
    let mut report = EvalReport {
        name: cfg.preset.clone().unwrap_or_else(|| "custom".into()),
        ..Default::default()
    };
    let count = |report: &mut EvalReport, key: &str, n: usize| {
        report.counts.insert(key.to_string(), n);
    };
    count(&mut report, "queries", traces.len());
    count(&mut report, "retrieval_skipped", traces.iter().filter(|t| !t.retrieved() && t.error.is_none()).count());
    count(&mut report, "stage_errors", traces.iter().filter(|t| t.error.is_some()).count());
    count(&mut report, "fallbacks", traces.iter().filter(|t| !t.fallbacks.is_empty()).count());

    let derived;
    let qrels = match qrels {
        Some(q) => Some(q),
        None => {
            derived = qrels_from_queries(&queries.iter().map(|q| (*q).clone()).collect::<Vec<_>>());
            derived.as_ref()
        }
    };
    if let Some(qrels) = qrels {
        let runs: Vec<ScoredList> = traces
            .iter()
            .map(|t| match &t.candidates {
                Some(list) => to_eval_unit(list, &c.store, cfg.eval_unit),
                None => ScoredList::empty(t.query_id.clone(), "retrieve"),
            })
            .collect();
        let r = retrieval_metrics(&runs, qrels, &options.metrics);
        report.metrics.extend(r.metrics);
        count(&mut report, "retrieval_evaluated", r.evaluated);
        count(&mut report, "no_relevant", r.no_relevant);
        count(&mut report, "no_judgments", r.no_judgments);
    }

    if options.generate {
        let (mut em, mut f1, mut acc) = (Vec::new(), Vec::new(), Vec::new());
        let mut no_match = 0usize;
        for (q, t) in queries.iter().zip(traces) {
            if q.gold_answers.is_empty() {
                continue;
            }
            let answer = t.answer.as_deref().unwrap_or("");
            match answer_patterns(q.task_label.as_deref()) {
                Some(p) => {
                    let x = accuracy_with_extraction(answer, &q.gold_answers[0], &p);
                    no_match += usize::from(x.extracted.is_none());
                    acc.push(x.score());
                }
                None => {
                    em.push(lenient_em(answer, &q.gold_answers));
                    f1.push(token_f1(answer, &q.gold_answers));
                }
            }
        }
        for (name, values) in [("em", &em), ("f1", &f1), ("accuracy", &acc)] {
            if let Some(m) = mean(values) {
                report.metrics.insert(name.to_string(), m);
            }
        }
        count(&mut report, "qa_evaluated", em.len() + acc.len());
        if !acc.is_empty() {
            count(&mut report, "extraction_no_match", no_match);
        }
        if cfg.judge != JudgeKind::None {
            judged_metrics(pipeline, queries, traces, &mut report);
        }
    }

    report.latency = latency_stats(&traces.iter().map(PipelineTrace::latency_map).collect::<Vec<_>>());
    Ok(report)
}

fn judged_metrics(pipeline: &Pipeline, queries: &[&Query], traces: &[PipelineTrace], report: &mut EvalReport) {
    let c = pipeline.components();
    let llm;
    let judges = match pipeline.config().judge {
        JudgeKind::Remote => {
            llm = LlmJudge::new(c.assistant.clone(), c.templates.clone());
            Judges {
                relevance: &llm,
                capability: &llm,
            }
        }
        _ => Judges {
            relevance: &OverlapJudge,
            capability: &OverlapJudge,
        },
    };
    let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut judge_failures = 0usize;
    for (q, t) in queries.iter().zip(traces) {
        let Some(answer) = &t.answer else { continue };
        let context = t.prompt_docs.join("\n\n");
        let mut parts = RagComponents::default();
        if t.retrieved() {
            let sents: Vec<&str> = t.prompt_docs.iter().flat_map(|d| sentences(d)).collect();
            let cr = context_relevancy(&q.text, &sents, judges.relevance);
            judge_failures += usize::from(cr.is_fallback());
            parts.context_relevancy = Some(cr.value);
            let gold: Vec<String> = c
                .store
                .iter()
                .filter(|ch| q.gold_doc_ids.contains(&ch.doc_id) && ch.parent_id.is_none())
                .map(|ch| ch.text.clone())
                .collect();
            if let (Some(embedder), false, false) = (&c.embedder, gold.is_empty(), t.prompt_docs.is_empty()) {
                match retrieval_similarity(embedder.as_ref(), &t.prompt_docs, &gold) {
                    Ok(v) => parts.retrieval_similarity = Some(v),
                    Err(e) => warn!("retrieval similarity failed for {}: {e}", q.id),
                }
            }
        }
        let reference = q.gold_answers.first().map(String::as_str).unwrap_or("");
        for metric in [JudgeMetric::Faithfulness, JudgeMetric::AnswerRelevancy, JudgeMetric::AnswerCorrectness] {
            if metric == JudgeMetric::AnswerCorrectness && reference.is_empty() {
                continue;
            }
            match judges.capability.judge(metric, &q.text, &context, answer, reference) {
                Ok(v) => {
                    let slot = match metric {
                        JudgeMetric::Faithfulness => &mut parts.faithfulness,
                        JudgeMetric::AnswerRelevancy => &mut parts.answer_relevancy,
                        JudgeMetric::AnswerCorrectness => &mut parts.answer_correctness,
                    };
                    *slot = Some(v);
                }
                Err(_) => judge_failures += 1,
            }
        }
        for (name, v) in [
            ("faithfulness", parts.faithfulness),
            ("context_relevancy", parts.context_relevancy),
            ("answer_relevancy", parts.answer_relevancy),
            ("answer_correctness", parts.answer_correctness),
            ("retrieval_similarity", parts.retrieval_similarity),
        ] {
            if let Some(v) = v {
                columns.entry(name).or_default().push(v);
            }
        }
        if let Ok(score) = rag_score(&parts) {
            columns.entry("rag_score").or_default().push(score);
        }
    }
    let rag_scored = columns.get("rag_score").map_or(0, Vec::len);
    for (name, values) in columns {
        if let Some(m) = mean(&values) {
            report.metrics.insert(name.to_string(), m);
        }
    }
    report.counts.insert("rag_scored".into(), rag_scored);
    report.counts.insert("judge_failures".into(), judge_failures);
}

pub const CONFIG_FILE: &str = "config.json";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

/// [`evaluate`] plus the run directory: `config.json`, `traces.jsonl`,
/// `report.json` and `report.md`. Malformed input lines are recorded in
/// the report.
pub fn run_eval(
    pipeline: &Pipeline,
    queries: &[Query],
    qrels: Option<&Qrels>,
    malformed: Vec<LineIssue>,
    options: &EvalOptions,
    run_dir: &Path,
) -> Result<EvalReport> {
    let (mut report, traces) = evaluate(pipeline, queries, qrels, options)?;
    report.counts.insert("malformed_lines".into(), malformed.len());
    report.malformed = malformed;
    write_run_dir(run_dir, pipeline.config(), &traces, &report)?;
    Ok(report)
}

pub fn write_run_dir(run_dir: &Path, config: &PipelineConfig, traces: &[PipelineTrace], report: &EvalReport) -> Result<()> {
    fs::create_dir_all(run_dir)?;
    fs::write(run_dir.join(CONFIG_FILE), serde_json::to_string_pretty(config)? + "\n")?;
    let mut lines = String::new();
    for t in traces {
        lines.push_str(&serde_json::to_string(t)?);
        lines.push('\n');
    }
    fs::write(run_dir.join(TRACES_FILE), lines)?;
    fs::write(run_dir.join(REPORT_JSON), serde_json::to_string_pretty(report)? + "\n")?;
    fs::write(run_dir.join(REPORT_MD), report.to_markdown())?;
    Ok(())
}

/// Single-module variations of a base configuration, grouped by module
/// like an ablation table. Every option of a module is listed, the base's
/// own choice included.
pub fn ablation_variants(base: &PipelineConfig) -> Vec<(&'static str, Vec<(String, PipelineConfig)>)> {
    let with = |f: &dyn Fn(&mut PipelineConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    let classification = vec![
        ("w/o classification".to_string(), with(&|c| c.classification = false)),
        ("+ classification".to_string(), with(&|c| c.classification = true)),
    ];
    let retrieval = [
        ("original", RetrievalMode::Original),
        ("hyde", RetrievalMode::Hyde),
        ("hybrid", RetrievalMode::Hybrid),
        ("hybrid_hyde", RetrievalMode::HybridHyde),
        ("bm25", RetrievalMode::Bm25),
    ]
    .into_iter()
    .map(|(label, r)| (format!("+ {label}"), with(&|c| c.retrieval = r)))
    .collect();
    let mut reranking = vec![("w/o reranking".to_string(), with(&|c| c.reranker = RerankerKind::None))];
    reranking.extend(
        [("dlm", RerankerKind::Dlm), ("tilde", RerankerKind::Tilde)]
            .into_iter()
            .map(|(label, r)| (format!("+ {label}"), with(&|c| c.reranker = r))),
    );
    let repacking = [("forward", RepackMode::Forward), ("reverse", RepackMode::Reverse), ("sides", RepackMode::Sides)]
        .into_iter()
        .map(|(label, m)| (format!("+ {label}"), with(&|c| c.repack = m)))
        .collect();
    let mut summarization = vec![("w/o summarization".to_string(), with(&|c| c.summarizer = SummarizerKind::None))];
    summarization.extend(
        [
            ("extractive_bm25", SummarizerKind::ExtractiveBm25),
            ("extractive_embedding", SummarizerKind::ExtractiveEmbedding),
            ("abstractive", SummarizerKind::Abstractive),
        ]
        .into_iter()
        .map(|(label, s)| (format!("+ {label}"), with(&|c| c.summarizer = s))),
    );
    vec![
        ("classification", classification),
        ("retrieval", retrieval),
        ("reranking", reranking),
        ("repacking", repacking),
        ("summarization", summarization),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGroup {
    pub module: String,
    /// Name of the row whose configuration equals the base.
    pub selected: Option<String>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub groups: Vec<AblationGroup>,
    /// Variants that could not run with the available components.
    pub skipped: Vec<String>,
}

impl AblationTable {
    pub fn rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.groups.iter().flat_map(|g| &g.rows)
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        for g in &self.groups {
            md.push_str(&format!("### {} module\n\n", g.module));
            let rows: Vec<ReportRow> = g
                .rows
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    if g.selected.as_deref() == Some(r.name.as_str()) {
                        r.name.push_str(" (selected)");
                    }
                    r
                })
                .collect();
            md.push_str(&render_markdown(&rows));
            md.push('\n');
        }
        for s in &self.skipped {
            md.push_str(&format!("skipped: {s}\n"));
        }
        md
    }
}

/// Evaluates each [`ablation_variants`] configuration over the same
/// queries. Identical configurations are evaluated once.
pub fn ablation_sweep(
    pipeline: &Pipeline,
    queries: &[Query],
    qrels: Option<&Qrels>,
    options: &EvalOptions,
) -> Result<AblationTable> {
    let base = pipeline.config();
    let mut done: BTreeMap<String, ReportRow> = BTreeMap::new();
    let mut table = AblationTable {
        groups: Vec::new(),
        skipped: Vec::new(),
    };
    for (module, variants) in ablation_variants(base) {
        let mut group = AblationGroup {
            module: module.to_string(),
            selected: None,
            rows: Vec::new(),
        };
        for (name, cfg) in variants {
            if cfg == *base {
                group.selected = Some(name.clone());
            }
            let key = serde_json::to_string(&cfg)?;
            let row = match done.get(&key) {
                Some(row) => row.clone(),
                None => {
                    let variant = match pipeline.with_config(cfg) {
                        Ok(p) => p,
                        Err(e) => {
                            info!("skipping ablation `{module}: {name}`: {e}");
                            table.skipped.push(format!("{module}: {name}: {e}"));
                            continue;
                        }
                    };
                    let row = evaluate(&variant, queries, qrels, options)?.0.row();
                    done.insert(key, row.clone());
                    row
                }
            };
            group.rows.push(ReportRow { name, ..row });
        }
        table.groups.push(group);
    }
    Ok(table)
}

/// On-disk store of raw first-stage lists, keyed by query and retrieval
/// settings.
#[derive(Debug, Clone)]
pub struct CandidateCache {
    dir: PathBuf,
}

impl CandidateCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path(&self, pipeline: &Pipeline, query: &Query) -> Result<PathBuf> {
        let cfg = pipeline.config();
        let c = pipeline.components();
        let fingerprint = serde_json::json!({
            "query": query,
            "classification": cfg.classification,
            "transform": cfg.transform,
            "retrieval": cfg.retrieval,
            "first_stage_k": cfg.first_stage_k,
            "hyde": cfg.hyde,
            "embedder": cfg.backends.embedder,
            "assistant": cfg.backends.assistant,
            "chunks": c.store.len(),
            "sparse": c.sparse.as_ref().map(|s| (s.len(), s.vocabulary_size(), s.avg_doc_length())),
            "dense": c.dense.as_ref().map(|d| (d.len(), d.backend_tag().to_string())),
        });
        let key = hex::encode(Sha256::digest(serde_json::to_vec(&fingerprint)?));
        Ok(self.dir.join(format!("{key}.json")))
    }

    pub fn get_or_compute(&self, pipeline: &Pipeline, query: &Query) -> Result<FirstStage> {
        let path = self.path(pipeline, query)?;
        if let Ok(raw) = fs::read_to_string(&path) {
            if let Ok(hit) = serde_json::from_str(&raw) {
                return Ok(hit);
            }
        }
        let computed = pipeline.first_stage(query)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_string(&computed)?)?;
        fs::rename(&tmp, &path)?;
        Ok(computed)
    }
}

/// Retrieval metrics for each α, retrieving once per query and repeating
/// only the fusion. With a cache, raw lists persist across invocations.
pub fn alpha_sweep(
    pipeline: &Pipeline,
    values: &[f64],
    queries: &[Query],
    qrels: &Qrels,
    cache: Option<&CandidateCache>,
    metrics: &[MetricSpec],
) -> Result<Vec<ReportRow>> {
    if values.is_empty() {
        return Err(Error::invalid("alpha sweep needs at least one value"));
    }
    if !pipeline.config().retrieval.is_hybrid() {
        return Err(Error::Config("alpha sweep needs hybrid retrieval".into()));
    }
    let mut ordered: Vec<&Query> = queries.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let firsts: Vec<FirstStage> = in_pool(pipeline.config().workers, || {
        ordered
            .par_iter()
            .map(|q| match cache {
                Some(c) => c.get_or_compute(pipeline, q),
                None => pipeline.first_stage(q),
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let store = &pipeline.components().store;
    let unit = pipeline.config().eval_unit;
    let wall = pipeline.config().timing == TimingMode::Wall;
    values
        .iter()
        .map(|&alpha| {
            let start = Instant::now();
            let runs = ordered
                .iter()
                .zip(&firsts)
                .map(|(q, f)| {
                    let list = fuse_first_stage(pipeline, &q.id, &f.subs, alpha)?;
                    Ok(to_eval_unit(&list, store, unit))
                })
                .collect::<Result<Vec<_>>>()?;
            let elapsed = if wall { start.elapsed().as_secs_f64() } else { 0.0 };
            let report = retrieval_metrics(&runs, qrels, metrics);
            Ok(ReportRow {
                name: format!("alpha={alpha}"),
                metrics: report.metrics,
                latency: if ordered.is_empty() { 0.0 } else { elapsed / ordered.len() as f64 },
            })
        })
        .collect()
}

fn fuse_first_stage(pipeline: &Pipeline, query_id: &str, subs: &[SubRetrieval], alpha: f64) -> Result<ScoredList> {
    if subs.is_empty() {
        return Ok(ScoredList::empty(query_id, "retrieve"));
    }
    Ok(pipeline.combine(query_id, subs, alpha)?.1)
}

/// Default α grid.
pub fn default_alpha_values() -> Vec<f64> {
    ALPHA_SWEEP.to_vec()
}

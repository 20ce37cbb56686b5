use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use super::components::Components;
use super::config::{PipelineConfig, RerankerKind, RetrievalMode, SummarizerKind, TimingMode, TransformMode};
use crate::dense::EmbeddingVector;
use crate::error::{Error, Result};
use crate::fusion::{merge_subquery_lists, normalize_and_fuse};
use crate::generation::{generate, truncate_context, Backend, GenerationRequest};
use crate::postprocess::{
    assemble_prompt, repack_order, summarize_abstractive, summarize_extractive, ContextDoc, RepackedContext,
    SentenceScorer,
};
use crate::rerank::{rerank_dlm, rerank_tilde};
use crate::scored::{ScoredEntry, ScoredList};
use crate::transform::{
    classify_query, decompose_query, hyde_combine, hyde_generate, rewrite_query, ClassificationDecision, Query,
    TransformedQuery,
};

/// Stage names in execution order.
pub const STAGES: [&str; 9] = [
    "classify",
    "transform",
    "retrieve",
    "rerank",
    "repack",
    "summarize",
    "truncate",
    "prompt",
    "generate",
];

const CLOSED_BOOK_TEMPLATE: &str = "closed_book";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

/// Raw first-stage lists for one (sub-)query, before fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubRetrieval {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse: Option<ScoredList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense: Option<ScoredList>,
}

/// Classification, transformation and raw retrieval for one query;
/// `subs` is empty when the gate skipped retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub decision: Option<ClassificationDecision>,
    pub transformed: Option<TransformedQuery>,
    pub subs: Vec<SubRetrieval>,
    pub fallbacks: BTreeMap<String, String>,
}

impl FirstStage {
    pub fn retrieved(&self) -> bool {
        !self.subs.is_empty()
    }
}

/// Everything one query went through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub query_id: String,
    /// `None` when classification is disabled.
    pub decision: Option<ClassificationDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformed: Option<TransformedQuery>,
    /// First-stage lists per sub-query, then the fused or merged list.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lists: Vec<ScoredList>,
    /// Final first-stage candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<ScoredList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reranked: Option<ScoredList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<RepackedContext>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    /// Documents placed in the prompt, in prompt order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompt_docs: Vec<String>,
    pub prompt: String,
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<Backend>,
    pub latencies: Vec<StageLatency>,
    /// Stage → reason, for stages that used a fallback path.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fallbacks: BTreeMap<String, String>,
    /// Stage → informational note, e.g. an offline stand-in.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<StageError>,
}

impl PipelineTrace {
    fn new(query_id: &str) -> Self {
        Self {
            query_id: query_id.to_string(),
            decision: None,
            transformed: None,
            lists: Vec::new(),
            candidates: None,
            reranked: None,
            context: None,
            summary: None,
            prompt_docs: Vec::new(),
            prompt: String::new(),
            answer: None,
            backend: None,
            latencies: Vec::new(),
            fallbacks: BTreeMap::new(),
            notes: BTreeMap::new(),
            error: None,
        }
    }

    pub fn stages(&self) -> Vec<&str> {
        self.latencies.iter().map(|l| l.stage.as_str()).collect()
    }

    pub fn has_stage(&self, stage: &str) -> bool {
        self.latencies.iter().any(|l| l.stage == stage)
    }

    pub fn latency_map(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for l in &self.latencies {
            *m.entry(l.stage.clone()).or_insert(0.0) += l.seconds;
        }
        m
    }

    pub fn total_latency(&self) -> f64 {
        self.latencies.iter().map(|l| l.seconds).sum()
    }

    pub fn retrieved(&self) -> bool {
        self.candidates.is_some()
    }
}

/// How far [`Pipeline::run_to`] goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopAfter {
    Retrieve,
    Generate,
}

/// A validated configuration bound to its components.
#[derive(Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    components: Arc<Components>,
}

struct Clock(Option<Instant>);

impl Clock {
    fn seconds(&self) -> f64 {
        self.0.map_or(0.0, |s| s.elapsed().as_secs_f64())
    }
}

impl Pipeline {
    /// Checks that every configured stage has what it needs.
    pub fn new(config: PipelineConfig, components: Arc<Components>) -> Result<Self> {
        config.validate()?;
        let c = &components;
        let missing = |what: &str| Err(Error::Config(format!("{what} is required by this configuration")));
        if config.retrieval.uses_sparse() {
            match &c.sparse {
                None => return missing("a sparse index"),
                Some(s) => check_known(s.chunk_ids().iter(), c, "sparse index")?,
            }
        }
        if config.retrieval.uses_dense() {
            let (Some(dense), Some(embedder)) = (&c.dense, &c.embedder) else {
                return missing("a dense index and an embedder");
            };
            dense.check_backend(embedder.as_ref())?;
            check_known(dense.ids().iter(), c, "dense index")?;
        }
        match config.reranker {
            RerankerKind::Dlm if c.scorer.is_none() => return missing("a relevance scorer"),
            RerankerKind::Tilde if c.tilde.is_none() => return missing("a TILDE index"),
            _ => {}
        }
        if config.summarizer == SummarizerKind::ExtractiveEmbedding && c.embedder.is_none() {
            return missing("an embedder");
        }
        c.templates.get(&config.template)?;
        if config.classification {
            c.templates.get(CLOSED_BOOK_TEMPLATE)?;
        }
        Ok(Self { config, components })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn components(&self) -> &Arc<Components> {
        &self.components
    }

    /// Same components under another configuration.
    pub fn with_config(&self, config: PipelineConfig) -> Result<Self> {
        Self::new(config, self.components.clone())
    }

    fn clock(&self) -> Clock {
        Clock(match self.config.timing {
            TimingMode::Wall => Some(Instant::now()),
            TimingMode::Logical => None,
        })
    }

    fn record(trace: &mut PipelineTrace, stage: &str, clock: Clock) {
        trace.latencies.push(StageLatency {
            stage: stage.to_string(),
            seconds: clock.seconds(),
        });
    }

    fn classify(&self, query: &Query, fallbacks: &mut BTreeMap<String, String>) -> Option<ClassificationDecision> {
        if !self.config.classification {
            return None;
        }
        let (decision, err) = classify_query(query, self.components.classifier.as_ref());
        if let Some(e) = err {
            fallbacks.insert("classify".into(), format!("classifier failed, retrieving: {e}"));
        }
        Some(decision)
    }

    /// Rewrite or decomposition, then HyDE vectors when configured.
    /// Returns the transformed query, the texts to search and the dense
    /// query vector for each text, where one was derived.
    fn transform(
        &self,
        query: &Query,
        fallbacks: &mut BTreeMap<String, String>,
    ) -> Result<(TransformedQuery, Vec<String>, Vec<Option<EmbeddingVector>>)> {
        let c = &self.components;
        let assistant = c.assistant.as_ref();
        let mut tq = TransformedQuery::new(query.clone());
        let texts = match self.config.transform {
            TransformMode::None => vec![query.text.clone()],
            TransformMode::Rewrite => {
                let out = rewrite_query(assistant, &c.templates, query);
                if let Some(r) = out.fallback {
                    fallbacks.insert("transform".into(), r);
                }
                tq.rewritten = Some(out.value.clone());
                vec![out.value]
            }
            TransformMode::Decompose => {
                let out = decompose_query(assistant, &c.templates, query);
                if let Some(r) = out.fallback {
                    fallbacks.insert("transform".into(), r);
                }
                tq.subqueries = out.value.clone();
                out.value
            }
        };
        let mut vectors = vec![None; texts.len()];
        if self.config.retrieval.uses_hyde() {
            let embedder = c.embedder.as_deref().ok_or_else(|| Error::Config("HyDE needs an embedder".into()))?;
            for (i, text) in texts.iter().enumerate() {
                let sub = Query::new(query.id.clone(), text.clone());
                let docs = hyde_generate(assistant, &c.templates, &sub, self.config.hyde.n)?;
                if let Some(r) = docs.fallback {
                    fallbacks.insert("transform".into(), r);
                }
                vectors[i] = Some(hyde_combine(embedder, &sub, &docs.value, self.config.hyde.include_query)?);
                tq.pseudo_docs.extend(docs.value);
            }
            if texts.len() == 1 {
                tq.dense_query_vector = vectors[0].clone();
            }
        }
        Ok((tq, texts, vectors))
    }

    fn retrieve_raw(
        &self,
        query_id: &str,
        texts: &[String],
        vectors: Vec<Option<EmbeddingVector>>,
    ) -> Result<Vec<SubRetrieval>> {
        let c = &self.components;
        let k = self.config.first_stage_k;
        let mode = self.config.retrieval;
        texts
            .iter()
            .zip(vectors)
            .map(|(text, vector)| {
                let sparse = match (&c.sparse, mode.uses_sparse()) {
                    (Some(index), true) => Some(index.search(query_id, text, k)?),
                    _ => None,
                };
                let dense = match (&c.dense, &c.embedder, mode.uses_dense()) {
                    (Some(index), Some(embedder), true) => {
                        let v = match vector {
                            Some(v) => v,
                            None => embedder.embed_one(text)?,
                        };
                        Some(index.search(query_id, &v, k)?)
                    }
                    _ => None,
                };
                Ok(SubRetrieval {
                    text: text.clone(),
                    sparse,
                    dense,
                })
            })
            .collect()
    }

    /// Classification, transformation and raw retrieval, untimed. Used by
    /// sweeps that cache the raw lists.
    pub fn first_stage(&self, query: &Query) -> Result<FirstStage> {
        let mut fallbacks = BTreeMap::new();
        let decision = self.classify(query, &mut fallbacks);
        if decision.is_some_and(|d| !d.needs_retrieval()) {
            return Ok(FirstStage {
                decision,
                transformed: None,
                subs: Vec::new(),
                fallbacks,
            });
        }
        let (tq, texts, vectors) = self.transform(query, &mut fallbacks)?;
        let subs = self.retrieve_raw(&query.id, &texts, vectors)?;
        Ok(FirstStage {
            decision,
            transformed: Some(tq),
            subs,
            fallbacks,
        })
    }

    /// Fuses each sub-query's lists per the retrieval mode at `alpha`, then
    /// merges sub-queries. Returns the per-sub-query lists and the final one.
    pub fn combine(&self, query_id: &str, subs: &[SubRetrieval], alpha: f64) -> Result<(Vec<ScoredList>, ScoredList)> {
        let k = self.config.first_stage_k;
        let mut per_sub = Vec::with_capacity(subs.len());
        for s in subs {
            let list = match (self.config.retrieval, &s.sparse, &s.dense) {
                (RetrievalMode::Bm25, Some(sp), _) => sp.clone(),
                (RetrievalMode::Original | RetrievalMode::Hyde, _, Some(d)) => d.clone(),
                (RetrievalMode::Hybrid | RetrievalMode::HybridHyde, Some(sp), Some(d)) => {
                    normalize_and_fuse(sp, d, alpha, k)?
                }
                _ => return Err(Error::Config("retrieval lists do not match the retrieval mode".into())),
            };
            per_sub.push(list);
        }
        let last = match per_sub.len() {
            0 => ScoredList::empty(query_id, "retrieve"),
            1 => per_sub[0].clone(),
            _ => merge_subquery_lists(&per_sub, k)?,
        };
        Ok((per_sub, last))
    }

    pub fn run(&self, query: &Query) -> PipelineTrace {
        self.run_to(query, StopAfter::Generate)
    }

    /// Runs the stages in order up to `stop`. A failing stage ends the run
    /// and is recorded in `error`.
    pub fn run_to(&self, query: &Query, stop: StopAfter) -> PipelineTrace {
        let mut trace = PipelineTrace::new(&query.id);
        if let Err((stage, e)) = self.stages(query, stop, &mut trace) {
            warn!("query {} failed at {stage}: {e}", query.id);
            trace.error = Some(StageError {
                stage: stage.to_string(),
                message: e.to_string(),
            });
        }
        trace
    }

    fn stages(&self, query: &Query, stop: StopAfter, trace: &mut PipelineTrace) -> std::result::Result<(), (&'static str, Error)> {
        let c = &self.components;
        let cfg = &self.config;

        if cfg.classification {
            let clock = self.clock();
            trace.decision = self.classify(query, &mut trace.fallbacks);
            Self::record(trace, "classify", clock);
        }
        let retrieve = trace.decision.is_none_or(|d| d.needs_retrieval());

        if !retrieve {
            if stop == StopAfter::Retrieve {
                return Ok(());
            }
            let clock = self.clock();
            trace.prompt = c
                .templates
                .render(CLOSED_BOOK_TEMPLATE, &[("query", &query.text)])
                .map_err(|e| ("prompt", e))?;
            Self::record(trace, "prompt", clock);
            return self.generate_stage(trace, Vec::new());
        }

        let clock = self.clock();
        let (tq, texts, vectors) = self.transform(query, &mut trace.fallbacks).map_err(|e| ("transform", e))?;
        trace.transformed = Some(tq);
        Self::record(trace, "transform", clock);

        let clock = self.clock();
        let subs = self.retrieve_raw(&query.id, &texts, vectors).map_err(|e| ("retrieve", e))?;
        let (per_sub, mut candidates) = self.combine(&query.id, &subs, cfg.alpha).map_err(|e| ("retrieve", e))?;
        for (i, s) in subs.into_iter().enumerate() {
            let prefix = if texts.len() > 1 { format!("sub{}/", i + 1) } else { String::new() };
            for mut l in [s.sparse, s.dense].into_iter().flatten() {
                l.stage = format!("{prefix}{}", l.stage);
                trace.lists.push(l);
            }
            if cfg.retrieval.is_hybrid() {
                let mut fused = per_sub[i].clone();
                fused.stage = format!("{prefix}{}", fused.stage);
                trace.lists.push(fused);
            }
        }
        if texts.len() > 1 {
            trace.lists.push(candidates.clone());
        }
        let secs = clock.seconds();
        candidates.latency = secs;
        trace.candidates = Some(candidates.clone());
        trace.latencies.push(StageLatency {
            stage: "retrieve".into(),
            seconds: secs,
        });
        if stop == StopAfter::Retrieve {
            return Ok(());
        }

        let ranked = match cfg.reranker {
            RerankerKind::None => ScoredList::ranked(
                candidates.query_id.clone(),
                candidates.stage.clone(),
                candidates.entries.clone(),
                cfg.rerank_k,
            ),
            kind => {
                let clock = self.clock();
                let mut list = match kind {
                    RerankerKind::Dlm => {
                        let scorer = c.scorer.as_deref().expect("validated");
                        let out = rerank_dlm(scorer, query, &candidates, &c.store, cfg.rerank_k, cfg.dlm_parallelism)
                            .map_err(|e| ("rerank", e))?;
                        if let Some(r) = out.fallback {
                            trace.fallbacks.insert("rerank".into(), r);
                        }
                        out.value
                    }
                    _ => rerank_tilde(c.tilde.as_ref().expect("validated"), query, &candidates, cfg.rerank_k)
                        .map_err(|e| ("rerank", e))?,
                };
                list.latency = clock.seconds();
                trace.reranked = Some(list.clone());
                trace.latencies.push(StageLatency {
                    stage: "rerank".into(),
                    seconds: list.latency,
                });
                list
            }
        };

        let clock = self.clock();
        let docs = self.context_docs(&ranked).map_err(|e| ("repack", e))?;
        let n = docs.len();
        let slots = repack_order((0..n).collect::<Vec<_>>(), cfg.repack);
        let context = RepackedContext {
            docs: repack_order(docs, cfg.repack),
            mode: cfg.repack,
        };
        trace.context = Some(context.clone());
        Self::record(trace, "repack", clock);

        // Each prompt document paired with the rank it came from.
        let mut ranked_docs: Vec<(usize, String)> = slots.into_iter().zip(context.texts()).collect();
        if cfg.summarizer != SummarizerKind::None {
            let clock = self.clock();
            let texts = context.texts();
            let summary = match cfg.summarizer {
                SummarizerKind::ExtractiveBm25 => summarize_extractive(query, &texts, cfg.ratio, SentenceScorer::Bm25),
                SummarizerKind::ExtractiveEmbedding => summarize_extractive(
                    query,
                    &texts,
                    cfg.ratio,
                    SentenceScorer::Embedding(c.embedder.as_deref().expect("validated")),
                ),
                _ if !c.assistant.is_remote() => {
                    trace
                        .notes
                        .insert("summarize".into(), "offline assistant: extractive BM25 stand-in".into());
                    summarize_extractive(query, &texts, cfg.ratio, SentenceScorer::Bm25)
                }
                _ => summarize_abstractive(c.assistant.as_ref(), &c.templates, query, &texts, cfg.ratio).map(|o| {
                    if let Some(r) = o.fallback {
                        trace.fallbacks.insert("summarize".into(), r);
                    }
                    o.value
                }),
            }
            .map_err(|e| ("summarize", e))?;
            ranked_docs = if summary.is_empty() { Vec::new() } else { vec![(0, summary.clone())] };
            trace.summary = Some(summary);
            Self::record(trace, "summarize", clock);
        }

        let clock = self.clock();
        let texts: Vec<String> = ranked_docs.iter().map(|(_, t)| t.clone()).collect();
        let truncated = truncate_context(&texts, cfg.max_context_words);
        ranked_docs.truncate(truncated.len());
        for (slot, text) in ranked_docs.iter_mut().zip(&truncated) {
            slot.1 = text.clone();
        }
        Self::record(trace, "truncate", clock);

        let clock = self.clock();
        let prompt_ctx = RepackedContext {
            docs: truncated
                .iter()
                .map(|t| ContextDoc {
                    chunk: String::new(),
                    text: t.clone(),
                })
                .collect(),
            mode: cfg.repack,
        };
        trace.prompt = assemble_prompt(&c.templates, query, &prompt_ctx, &cfg.template).map_err(|e| ("prompt", e))?;
        trace.prompt_docs = truncated;
        Self::record(trace, "prompt", clock);

        // Offline backends see the grounding texts best-ranked first.
        ranked_docs.sort_by_key(|(rank, _)| *rank);
        self.generate_stage(trace, ranked_docs.into_iter().map(|(_, t)| t).collect())
    }

    fn generate_stage(&self, trace: &mut PipelineTrace, context: Vec<String>) -> std::result::Result<(), (&'static str, Error)> {
        let c = &self.components;
        let clock = self.clock();
        let request = GenerationRequest::new(trace.prompt.clone(), self.config.max_new_tokens, c.generator.model_tag())
            .with_context(context);
        let result = generate(c.generator.as_ref(), &request);
        Self::record(trace, "generate", clock);
        let result = result.map_err(|e| ("generate", Error::Client(e)))?;
        trace.answer = Some(result.text);
        trace.backend = Some(result.backend);
        Ok(())
    }

    /// Chunk texts for the reranked list, with small2big children replaced
    /// by their parents (first occurrence kept).
    fn context_docs(&self, ranked: &ScoredList) -> Result<Vec<ContextDoc>> {
        let store = &self.components.store;
        let mut seen = HashSet::new();
        let mut docs = Vec::new();
        for ScoredEntry { chunk, .. } in &ranked.entries {
            let target = if self.config.expand_to_parent {
                store.expand_to_parent(chunk)?
            } else {
                store.get(chunk).ok_or_else(|| Error::UnknownChunk(chunk.clone()))?
            };
            if seen.insert(target.id.clone()) {
                docs.push(ContextDoc {
                    chunk: target.id.clone(),
                    text: target.text.clone(),
                });
            }
        }
        Ok(docs)
    }
}

fn check_known<'a>(ids: impl Iterator<Item = &'a String>, c: &Components, what: &str) -> Result<()> {
    for id in ids {
        if c.store.get(id).is_none() {
            return Err(Error::Config(format!("{what} refers to chunk `{id}` missing from the chunk store")));
        }
    }
    Ok(())
}

/// Runs the full pipeline for one query.
pub fn run_pipeline(pipeline: &Pipeline, query: &Query) -> PipelineTrace {
    pipeline.run(query)
}

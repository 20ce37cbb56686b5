use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::client::MockBehavior;
use crate::error::{Error, Result};
use crate::fusion::DEFAULT_ALPHA;
use crate::generation::{DEFAULT_MAX_CONTEXT_WORDS, QA_MAX_NEW_TOKENS};
use crate::postprocess::{RepackMode, DEFAULT_SUMMARY_RATIO};
use crate::sparse::DEFAULT_FIRST_STAGE_K;

pub const BEST_PERFORMANCE: &str = "best_performance";
pub const BALANCED_EFFICIENCY: &str = "balanced_efficiency";
pub const DEFAULT_RERANK_K: usize = 5;
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// Dense search with the query embedding.
    Original,
    /// Dense search with the HyDE vector.
    Hyde,
    /// BM25 fused with dense search on the query embedding.
    Hybrid,
    /// BM25 fused with dense search on the HyDE vector.
    HybridHyde,
    /// BM25 alone.
    Bm25,
}

impl RetrievalMode {
    pub fn uses_sparse(self) -> bool {
        matches!(self, Self::Hybrid | Self::HybridHyde | Self::Bm25)
    }

    pub fn uses_dense(self) -> bool {
        !matches!(self, Self::Bm25)
    }

    pub fn uses_hyde(self) -> bool {
        matches!(self, Self::Hyde | Self::HybridHyde)
    }

    pub fn is_hybrid(self) -> bool {
        matches!(self, Self::Hybrid | Self::HybridHyde)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMode {
    #[default]
    None,
    Rewrite,
    Decompose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankerKind {
    None,
    Dlm,
    Tilde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizerKind {
    None,
    ExtractiveBm25,
    ExtractiveEmbedding,
    Abstractive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    /// No judged capability metrics.
    #[default]
    None,
    /// Offline term-overlap heuristics.
    Overlap,
    /// The assistant chat backend.
    Remote,
}

/// How stage latencies are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    #[default]
    Wall,
    /// Every stage records 0 s, making traces and reports reproducible
    /// byte for byte.
    Logical,
}

/// Unit that qrels and gold ids refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalUnit {
    #[default]
    Doc,
    Chunk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydeConfig {
    pub n: usize,
    pub include_query: bool,
}

impl Default for HydeConfig {
    fn default() -> Self {
        Self { n: 1, include_query: true }
    }
}

/// A chat backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ChatSpec {
    Mock {
        behavior: MockBehavior,
    },
    /// OpenAI-compatible chat completions.
    Openai {
        url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum EmbedderSpec {
    Deterministic {
        dim: usize,
    },
    Remote {
        url: String,
        model: String,
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ScorerSpec {
    /// Offline query-term overlap.
    Overlap,
    Remote {
        url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierSpec {
    Rule,
    /// Ask the assistant backend.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    /// Answers the final prompt.
    pub generator: ChatSpec,
    /// Rewriting, decomposition, HyDE, abstractive summaries, remote
    /// classification and judging.
    pub assistant: ChatSpec,
    pub embedder: EmbedderSpec,
    pub reranker: ScorerSpec,
    pub classifier: ClassifierSpec,
    /// On-disk completion cache shared by both chat backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
}

impl Default for Backends {
    fn default() -> Self {
        Self {
            generator: ChatSpec::Mock {
                behavior: MockBehavior::EchoTopDoc,
            },
            assistant: ChatSpec::Mock {
                behavior: MockBehavior::Echo,
            },
            embedder: EmbedderSpec::Deterministic {
                dim: crate::dense::DEFAULT_DIM,
            },
            reranker: ScorerSpec::Overlap,
            classifier: ClassifierSpec::Rule,
            cache_dir: None,
            task_table: None,
            templates_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Preset the file's fields override; informational once resolved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub classification: bool,
    pub transform: TransformMode,
    pub retrieval: RetrievalMode,
    pub alpha: f64,
    pub first_stage_k: usize,
    pub hyde: HydeConfig,
    pub reranker: RerankerKind,
    pub rerank_k: usize,
    /// Replace small2big children with their parent chunks before repacking.
    pub expand_to_parent: bool,
    pub repack: RepackMode,
    pub summarizer: SummarizerKind,
    pub ratio: f64,
    pub max_context_words: usize,
    pub template: String,
    pub max_new_tokens: usize,
    pub judge: JudgeKind,
    pub eval_unit: EvalUnit,
    pub workers: usize,
    pub dlm_parallelism: usize,
    pub timing: TimingMode,
    pub backends: Backends,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        preset(BEST_PERFORMANCE).expect("built-in preset")
    }
}

fn shared_defaults(name: &str) -> PipelineConfig {
    PipelineConfig {
        preset: Some(name.to_string()),
        classification: true,
        transform: TransformMode::None,
        retrieval: RetrievalMode::HybridHyde,
        alpha: DEFAULT_ALPHA,
        first_stage_k: DEFAULT_FIRST_STAGE_K,
        hyde: HydeConfig::default(),
        reranker: RerankerKind::Dlm,
        rerank_k: DEFAULT_RERANK_K,
        expand_to_parent: true,
        repack: RepackMode::Reverse,
        summarizer: SummarizerKind::Abstractive,
        ratio: DEFAULT_SUMMARY_RATIO,
        max_context_words: DEFAULT_MAX_CONTEXT_WORDS,
        template: "qa".to_string(),
        max_new_tokens: QA_MAX_NEW_TOKENS,
        judge: JudgeKind::None,
        eval_unit: EvalUnit::Doc,
        workers: DEFAULT_WORKERS,
        dlm_parallelism: 4,
        timing: TimingMode::Wall,
        backends: Backends::default(),
    }
}

/// The recommended configurations: `best_performance` (hybrid search with
/// HyDE, DLM reranking) and `balanced_efficiency` (hybrid search, TILDE
/// reranking). Both gate on classification, repack in reverse and
/// summarize abstractively.
pub fn preset(name: &str) -> Result<PipelineConfig> {
    match name {
        BEST_PERFORMANCE => Ok(shared_defaults(name)),
        BALANCED_EFFICIENCY => Ok(PipelineConfig {
            retrieval: RetrievalMode::Hybrid,
            reranker: RerankerKind::Tilde,
            ..shared_defaults(name)
        }),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

fn merge(base: &mut Value, overrides: Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // Tagged backend specs are replaced whole so a kind
                    // change does not inherit the old kind's fields.
                    Some(slot) if slot.is_object() && v.is_object() && v.get("kind").is_none() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl PipelineConfig {
    /// Resolves a JSON config: fields override the named `preset`
    /// (default `best_performance`).
    pub fn from_json(value: Value) -> Result<Self> {
        if !value.is_object() {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        let name = match value.get("preset") {
            None | Some(Value::Null) => BEST_PERFORMANCE.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        };
        let mut base = serde_json::to_value(preset(&name)?)?;
        merge(&mut base, value);
        let config: Self = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(value)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return fail(format!("ratio must lie in (0, 1], got {}", self.ratio));
        }
        if self.first_stage_k == 0 || self.rerank_k == 0 {
            return fail("first_stage_k and rerank_k must be at least 1".into());
        }
        if self.rerank_k > self.first_stage_k {
            return fail(format!(
                "rerank_k ({}) exceeds first_stage_k ({})",
                self.rerank_k, self.first_stage_k
            ));
        }
        if self.retrieval.uses_hyde() && self.hyde.n == 0 {
            return fail("HyDE needs at least one pseudo-document".into());
        }
        if self.max_new_tokens == 0 || self.max_context_words == 0 {
            return fail("max_new_tokens and max_context_words must be at least 1".into());
        }
        if self.workers == 0 || self.dlm_parallelism == 0 {
            return fail("workers and dlm_parallelism must be at least 1".into());
        }
        Ok(())
    }
}

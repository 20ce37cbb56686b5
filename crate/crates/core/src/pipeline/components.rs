use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;

use super::config::{ChatSpec, ClassifierSpec, EmbedderSpec, PipelineConfig, ScorerSpec};
use crate::client::{CachedChat, ChatClient, Endpoint, MockChat, OpenAiChat, RetryPolicy, API_KEY_ENV};
use crate::corpus::{read_chunks, Chunk, ChunkStore};
use crate::dense::{DenseIndex, DeterministicEmbedder, Embedder, RemoteEmbedder};
use crate::error::{Error, Result};
use crate::rerank::{build_tilde_fallback, OverlapScorer, RelevanceScorer, RemoteReranker, TildeIndex};
use crate::sparse::{build_sparse, Bm25Params, SparseIndex};
use crate::templates::TemplateSet;
use crate::transform::{LlmClassifier, QueryClassifier, RuleClassifier, TaskTable};

/// File layout of an index directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexLayout {
    pub root: PathBuf,
}

impl IndexLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn chunks(&self) -> PathBuf {
        self.root.join("chunks.jsonl")
    }

    pub fn sparse(&self) -> PathBuf {
        self.root.join("sparse")
    }

    pub fn dense(&self) -> PathBuf {
        self.root.join("dense")
    }

    pub fn tilde(&self) -> PathBuf {
        self.root.join("tilde.jsonl")
    }
}

/// Indices and backends a pipeline runs against. Read-only while queries
/// are evaluated.
pub struct Components {
    pub store: ChunkStore,
    pub sparse: Option<SparseIndex>,
    pub dense: Option<DenseIndex>,
    pub tilde: Option<TildeIndex>,
    pub embedder: Option<Box<dyn Embedder>>,
    pub scorer: Option<Box<dyn RelevanceScorer>>,
    pub generator: Arc<dyn ChatClient>,
    pub assistant: Arc<dyn ChatClient>,
    pub classifier: Box<dyn QueryClassifier>,
    pub templates: TemplateSet,
}

impl Components {
    /// Offline components over `store`: deterministic embedder, overlap
    /// reranker, rule classifier and the given chat mocks.
    pub fn offline(store: ChunkStore, generator: MockChat, assistant: MockChat) -> Self {
        Self {
            store,
            sparse: None,
            dense: None,
            tilde: None,
            embedder: Some(Box::new(DeterministicEmbedder::new(crate::dense::DEFAULT_DIM).expect("valid dim"))),
            scorer: Some(Box::new(OverlapScorer)),
            generator: Arc::new(generator),
            assistant: Arc::new(assistant),
            classifier: Box::new(RuleClassifier::default()),
            templates: TemplateSet::default(),
        }
    }

    /// Builds sparse, dense and fallback TILDE indices over the store in
    /// memory, replacing any already attached. Small2big parents are left
    /// out; only their children are searchable.
    pub fn with_built_indices(mut self) -> Result<Self> {
        let parents: HashSet<&str> = self.store.iter().filter_map(|c| c.parent_id.as_deref()).collect();
        let chunks: Vec<Chunk> = self.store.iter().filter(|c| !parents.contains(c.id.as_str())).cloned().collect();
        let sparse = build_sparse(&chunks, Bm25Params::default())?;
        self.tilde = Some(build_tilde_fallback(&sparse));
        self.sparse = Some(sparse);
        if let Some(embedder) = &self.embedder {
            let items: Vec<(String, String)> = chunks.into_iter().map(|c| (c.id, c.text)).collect();
            self.dense = Some(DenseIndex::build(embedder.as_ref(), &items)?);
        }
        Ok(self)
    }

    /// Loads whatever indices exist under `layout` and builds the backends
    /// named in `config`.
    pub fn load(config: &PipelineConfig, layout: &IndexLayout) -> Result<Self> {
        let store = ChunkStore::new(read_chunks(&layout.chunks())?)?;
        let sparse = layout
            .sparse()
            .join(crate::sparse::MANIFEST_FILE)
            .exists()
            .then(|| SparseIndex::load(&layout.sparse()))
            .transpose()?;
        let dense = layout
            .dense()
            .join(crate::dense::MANIFEST_FILE)
            .exists()
            .then(|| DenseIndex::load(&layout.dense()))
            .transpose()?;
        let tilde = layout.tilde().exists().then(|| TildeIndex::load(&layout.tilde())).transpose()?;
        info!(
            "loaded {} chunks (sparse: {}, dense: {}, tilde: {})",
            store.len(),
            sparse.is_some(),
            dense.is_some(),
            tilde.is_some()
        );
        let mut c = Self::from_backends(config, store)?;
        c.sparse = sparse;
        c.dense = dense;
        c.tilde = tilde;
        Ok(c)
    }

    /// Backends from `config` with no indices attached.
    pub fn from_backends(config: &PipelineConfig, store: ChunkStore) -> Result<Self> {
        let b = &config.backends;
        let templates = match &b.templates_dir {
            Some(dir) => TemplateSet::with_overrides(dir)?,
            None => TemplateSet::default(),
        };
        let cache = b.cache_dir.as_deref();
        let generator = chat_client(&b.generator, cache)?;
        let assistant = chat_client(&b.assistant, cache)?;
        let classifier: Box<dyn QueryClassifier> = match b.classifier {
            ClassifierSpec::Rule => Box::new(RuleClassifier::new(match &b.task_table {
                Some(p) => TaskTable::load(p)?,
                None => TaskTable::default(),
            })),
            ClassifierSpec::Remote => Box::new(LlmClassifier::new(assistant.clone(), templates.clone())),
        };
        Ok(Self {
            store,
            sparse: None,
            dense: None,
            tilde: None,
            embedder: Some(embedder(&b.embedder)?),
            scorer: Some(scorer(&b.reranker)?),
            generator,
            assistant,
            classifier,
            templates,
        })
    }
}

fn endpoint(url: &str, model: &str, key_env: &Option<String>) -> Endpoint {
    let mut e = Endpoint::new(url, model);
    e.api_key_env = key_env.clone().unwrap_or_else(|| API_KEY_ENV.to_string());
    e
}

pub fn chat_client(spec: &ChatSpec, cache_dir: Option<&Path>) -> Result<Arc<dyn ChatClient>> {
    let base: Arc<dyn ChatClient> = match spec {
        ChatSpec::Mock { behavior } => Arc::new(MockChat::new(behavior.clone())),
        ChatSpec::Openai { url, model, api_key_env } => {
            Arc::new(OpenAiChat::new(&endpoint(url, model, api_key_env), RetryPolicy::default())?)
        }
    };
    Ok(match cache_dir {
        Some(dir) => Arc::new(CachedChat::new(base, dir).map_err(Error::Io)?),
        None => base,
    })
}

pub fn embedder(spec: &EmbedderSpec) -> Result<Box<dyn Embedder>> {
    Ok(match spec {
        EmbedderSpec::Deterministic { dim } => Box::new(DeterministicEmbedder::new(*dim)?),
        EmbedderSpec::Remote {
            url,
            model,
            dim,
            api_key_env,
        } => Box::new(RemoteEmbedder::new(&endpoint(url, model, api_key_env), *dim, RetryPolicy::default())?),
    })
}

pub fn scorer(spec: &ScorerSpec) -> Result<Box<dyn RelevanceScorer>> {
    Ok(match spec {
        ScorerSpec::Overlap => Box::new(OverlapScorer),
        ScorerSpec::Remote { url, model, api_key_env } => {
            Box::new(RemoteReranker::new(&endpoint(url, model, api_key_env), RetryPolicy::default())?)
        }
    })
}

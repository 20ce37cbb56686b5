use std::sync::Arc;

use serde_json::{json, Value};

use super::EmbeddingVector;
use crate::client::{ClientError, Endpoint, HttpJson, RetryPolicy};
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 256;
/// Texts per request to a remote embedding service.
pub const MAX_EMBED_BATCH: usize = 64;

pub trait Embedder: Send + Sync {
    /// Stable identifier of the model; indices record it.
    fn tag(&self) -> String;

    fn dim(&self) -> usize;

    /// One L2-normalized vector per input text, in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        let mut v = self.embed_batch(&[text.to_string()])?;
        v.pop().ok_or_else(|| Error::invalid("embedder returned no vector"))
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn tag(&self) -> String {
        (**self).tag()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn tag(&self) -> String {
        (**self).tag()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

/// Embeds texts, rejecting empty input lists and empty strings.
pub fn embed(backend: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Err(Error::invalid("nothing to embed"));
    }
    if texts.iter().any(|t| t.is_empty()) {
        return Err(Error::invalid("cannot embed an empty string"));
    }
    let out = backend.embed_batch(texts)?;
    for v in &out {
        if v.dim() != backend.dim() {
            return Err(Error::DimensionMismatch {
                expected: backend.dim(),
                found: v.dim(),
            });
        }
    }
    Ok(out)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Signed hashed character-trigram counts, L2-normalized.
///
/// Each trigram's UTF-8 bytes are hashed with FNV-1a; the bucket is
/// `hash % dim` and the sign is `+1` for even hashes, `-1` for odd ones.
/// Texts with no trigram map to the first basis vector.
pub fn deterministic_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 8, "deterministic embedding dimension must be at least 8");
    let chars: Vec<char> = text.chars().collect();
    let mut raw = vec![0.0f32; dim];
    let mut buf = [0u8; 12];
    for w in chars.windows(3) {
        let mut len = 0;
        for c in w {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let h = fnv1a64(&buf[..len]);
        let bucket = (h % dim as u64) as usize;
        raw[bucket] += if h & 1 == 0 { 1.0 } else { -1.0 };
    }
    EmbeddingVector::normalized(raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeterministicEmbedder {
    dim: usize,
}

impl DeterministicEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(Error::invalid(format!("embedding dimension {dim} is below 8")));
        }
        Ok(Self { dim })
    }
}

impl Default for DeterministicEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl Embedder for DeterministicEmbedder {
    fn tag(&self) -> String {
        format!("trigram-fnv1a-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| deterministic_embed(t, self.dim)).collect())
    }
}

/// OpenAI-compatible `/embeddings` client.
///
/// Inputs are split into batches of at most [`MAX_EMBED_BATCH`] texts and
/// up to `parallelism` batches are in flight at once. Output order always
/// matches input order.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    http: HttpJson,
    model: String,
    dim: usize,
    parallelism: usize,
    batch_size: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &Endpoint, dim: usize, policy: RetryPolicy) -> Result<Self> {
        Ok(Self {
            http: HttpJson::new(endpoint, policy)?,
            model: endpoint.model.clone(),
            dim,
            parallelism: 4,
            batch_size: MAX_EMBED_BATCH,
        })
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.clamp(1, MAX_EMBED_BATCH);
        self
    }

    fn request(&self, batch: &[String]) -> Result<Vec<EmbeddingVector>> {
        let resp = self
            .http
            .post_json("embeddings", &json!({"model": self.model, "input": batch}))?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| ClientError::Decode("embedding response has no `data` array".into()))?;
        if data.len() != batch.len() {
            return Err(ClientError::Decode(format!(
                "expected {} embeddings, got {}",
                batch.len(),
                data.len()
            ))
            .into());
        }
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; batch.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(Value::as_u64)
                .map(|i| i as usize)
                .unwrap_or(pos);
            let values: Vec<f32> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| ClientError::Decode("missing `embedding`".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<_>>()
                .ok_or_else(|| ClientError::Decode("non-numeric embedding value".into()))?;
            if values.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: values.len(),
                });
            }
            let slot = slots
                .get_mut(index)
                .ok_or_else(|| ClientError::Decode(format!("embedding index {index} out of range")))?;
            *slot = Some(EmbeddingVector::normalized(values));
        }
        slots
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ClientError::Decode("duplicate embedding index".into()).into())
    }
}

impl Embedder for RemoteEmbedder {
    fn tag(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let batches: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        let mut results: Vec<Option<Result<Vec<EmbeddingVector>>>> =
            (0..batches.len()).map(|_| None).collect();
        for (wave_idx, wave) in batches.chunks(self.parallelism).enumerate() {
            let base = wave_idx * self.parallelism;
            std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| s.spawn(move || self.request(batch)))
                    .collect();
                for (i, h) in handles.into_iter().enumerate() {
                    results[base + i] =
                        Some(h.join().unwrap_or_else(|_| Err(Error::invalid("embedding worker panicked"))));
                }
            });
        }
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r.expect("every batch ran")?);
        }
        Ok(out)
    }
}

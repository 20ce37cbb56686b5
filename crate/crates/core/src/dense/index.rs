use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{dot, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::scored::{rank_order, Provenance, ScoredEntry, ScoredList};

pub const VECTORS_FILE: &str = "vectors.f32";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseManifest {
    pub dim: usize,
    pub backend_tag: String,
    pub chunk_ids: Vec<String>,
}

/// Row-major matrix of normalized vectors searched exhaustively.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    ids: Vec<String>,
    matrix: Vec<f32>,
    dim: usize,
    backend_tag: String,
}

impl DenseIndex {
    pub fn new(dim: usize, backend_tag: impl Into<String>) -> Self {
        Self {
            ids: Vec::new(),
            matrix: Vec::new(),
            dim,
            backend_tag: backend_tag.into(),
        }
    }

    pub fn from_vectors(
        backend_tag: impl Into<String>,
        items: impl IntoIterator<Item = (String, EmbeddingVector)>,
        dim: usize,
    ) -> Result<Self> {
        let mut index = Self::new(dim, backend_tag);
        let mut seen = std::collections::HashSet::new();
        for (id, v) in items {
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            index.push(id, &v)?;
        }
        Ok(index)
    }

    /// Embeds `(id, text)` pairs with `backend` and indexes them.
    pub fn build(backend: &dyn Embedder, items: &[(String, String)]) -> Result<Self> {
        let texts: Vec<String> = items.iter().map(|(_, t)| t.clone()).collect();
        let vectors = if texts.is_empty() {
            Vec::new()
        } else {
            super::embed(backend, &texts)?
        };
        Self::from_vectors(
            backend.tag(),
            items.iter().map(|(id, _)| id.clone()).zip(vectors),
            backend.dim(),
        )
    }

    fn push(&mut self, id: String, v: &EmbeddingVector) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.dim(),
            });
        }
        self.ids.push(id);
        self.matrix.extend_from_slice(v.values());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backend_tag(&self) -> &str {
        &self.backend_tag
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    /// Fails unless `backend` is the embedder this index was built with.
    pub fn check_backend(&self, backend: &dyn Embedder) -> Result<()> {
        if backend.tag() != self.backend_tag {
            return Err(Error::BackendMismatch {
                index: self.backend_tag.clone(),
                query: backend.tag(),
            });
        }
        Ok(())
    }

    pub fn search(&self, query_id: &str, query: &EmbeddingVector, k: usize) -> Result<ScoredList> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        if k == 0 {
            return Err(Error::invalid("search depth k must be at least 1"));
        }
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .map(|i| (dot(self.vector(i), query.values()), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| rank_order(a.0, &self.ids[a.1], b.0, &self.ids[b.1]);
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        let entries = scored
            .into_iter()
            .map(|(s, i)| ScoredEntry::new(self.ids[i].clone(), s, Provenance::Dense))
            .collect();
        Ok(ScoredList {
            query_id: query_id.to_string(),
            entries,
            stage: "dense".to_string(),
            latency: 0.0,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(VECTORS_FILE))?);
        for v in &self.matrix {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let manifest = DenseManifest {
            dim: self.dim,
            backend_tag: self.backend_tag.clone(),
            chunk_ids: self.ids.clone(),
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DenseManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let path = dir.join(VECTORS_FILE);
        let mut bytes = Vec::new();
        BufReader::new(File::open(&path)?).read_to_end(&mut bytes)?;
        let expected = manifest.dim * manifest.chunk_ids.len() * 4;
        if bytes.len() != expected {
            return Err(Error::Corrupt {
                path,
                message: format!("expected {expected} bytes, found {}", bytes.len()),
            });
        }
        let matrix = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self {
            ids: manifest.chunk_ids,
            matrix,
            dim: manifest.dim,
            backend_tag: manifest.backend_tag,
        })
    }
}

pub fn search_dense(
    index: &DenseIndex,
    query_id: &str,
    query: &EmbeddingVector,
    k: usize,
) -> Result<ScoredList> {
    index.search(query_id, query, k)
}

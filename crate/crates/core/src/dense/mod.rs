//! Embedding backends and an exact (flat) cosine-similarity index.

mod embed;
mod index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embed::{
    deterministic_embed, embed, fnv1a64, DeterministicEmbedder, Embedder, RemoteEmbedder,
    DEFAULT_DIM, MAX_EMBED_BATCH,
};
pub use index::{search_dense, DenseIndex, DenseManifest, MANIFEST_FILE, VECTORS_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    /// L2-normalizes `values`; an all-zero (or non-finite) vector becomes
    /// the first basis vector.
    pub fn normalized(mut values: Vec<f32>) -> Self {
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 && norm.is_finite() {
            for v in &mut values {
                *v = (f64::from(*v) / norm) as f32;
            }
        } else {
            values.iter_mut().for_each(|v| *v = 0.0);
            if let Some(first) = values.first_mut() {
                *first = 1.0;
            }
        }
        Self { values }
    }

    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut values = vec![0.0; dim];
        values[axis] = 1.0;
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(dot(&self.values, &other.values))
    }

    /// Cosine similarity; equal to [`Self::dot`] for normalized vectors.
    pub fn cosine(&self, other: &Self) -> Result<f64> {
        let d = self.dot(other)?;
        let n = self.norm() * other.norm();
        Ok(if n > 0.0 { d / n } else { 0.0 })
    }

    /// Normalized arithmetic mean of several vectors of one dimension.
    pub fn mean_normalized(vectors: &[EmbeddingVector]) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::invalid("cannot average zero vectors"))?;
        let dim = first.dim();
        let mut acc = vec![0.0f64; dim];
        for v in vectors {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            for (a, &x) in acc.iter_mut().zip(&v.values) {
                *a += f64::from(x);
            }
        }
        let n = vectors.len() as f64;
        Ok(Self::normalized(acc.into_iter().map(|a| (a / n) as f32).collect()))
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

//! Sentence embeddings and cosine similarity.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MetricsError;
use crate::analysis::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

impl From<Vec<f64>> for EmbeddingVector {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

/// Anything that maps text to a fixed-dimension vector.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricsError>;
}

/// `dot(a, b) / sqrt(|a|² |b|²)`.
///
/// Taking a single square root of the product keeps integer-valued inputs
/// exact: two count vectors with `|a|² = |b|² = 25` and dot 15 give exactly
/// 0.6.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Deterministic bag-of-tokens embedder: each lowercased token increments
/// one of `dim` buckets chosen by a SHA-256 prefix of the token.
///
/// Used in tests and offline analysis where a pretrained sentence encoder is
/// not available. Two texts share similarity only through shared buckets.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIM: usize = 4096;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn bucket(&self, token: &str) -> usize {
        let digest = Sha256::digest(token.to_lowercase().as_bytes());
        let mut prefix = [0u8; 8];
        prefix.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(prefix) % self.dim as u64) as usize
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricsError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(MetricsError::EmptyText);
        }
        let mut values = vec![0.0; self.dim];
        for t in tokens {
            values[self.bucket(t)] += 1.0;
        }
        Ok(EmbeddingVector::new(values))
    }
}

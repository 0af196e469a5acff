//! Embedding vectors and the deterministic offline embedding.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Dimension of every behavior and operation embedding.
pub const EMBEDDING_DIM: usize = 1536;

/// Norms below this are treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Embedding with unit L2 norm, or the all-zero vector flagged `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    degenerate: bool,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit length. Non-finite components are
    /// rejected; near-zero vectors become degenerate.
    pub fn normalized(values: Vec<f64>) -> Result<Self, NonFinite> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NonFinite);
        }
        let norm = l2_norm(&values);
        if norm < DEGENERATE_NORM {
            return Ok(Self::degenerate(values.len()));
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
            degenerate: false,
        })
    }

    pub fn degenerate(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            degenerate: true,
        }
    }

    /// Rebuilds a vector that was stored already normalized, bit for bit.
    pub(crate) fn from_stored(values: Vec<f64>, degenerate: bool) -> Self {
        Self { values, degenerate }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.values, &other.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("embedding has a non-finite component")]
pub struct NonFinite;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Hashed features of one token: the whole token plus the character
/// 3-grams of `#token#`.
pub fn token_features(token: &str) -> Vec<String> {
    let mut features = vec![format!("w:{token}")];
    let padded: Vec<char> = format!("#{token}#").chars().collect();
    for gram in padded.windows(3) {
        features.push(format!("g:{}", gram.iter().collect::<String>()));
    }
    features
}

/// Bucket and sign of a feature string.
pub fn feature_bucket(feature: &str) -> (usize, f64) {
    let digest = Sha256::digest(feature.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    let h = u64::from_le_bytes(head);
    let bucket = (h % EMBEDDING_DIM as u64) as usize;
    let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

/// Deterministic feature-hashing embedding used when no embedding service
/// is available. Whole tokens weigh twice as much as their 3-grams.
pub fn fallback_embed(text: &str) -> EmbeddingVector {
    let mut values = vec![0.0; EMBEDDING_DIM];
    for token in tokenize(text) {
        for feature in token_features(&token) {
            let weight = if feature.starts_with("w:") { 2.0 } else { 1.0 };
            let (bucket, sign) = feature_bucket(&feature);
            values[bucket] += sign * weight;
        }
    }
    EmbeddingVector::normalized(values).expect("hash features are finite")
}

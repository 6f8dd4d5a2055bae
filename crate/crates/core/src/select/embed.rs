//! Sentence encoders and cosine similarity.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::segment::tokenize;
use crate::transport::{EndpointConfig, JsonClient, TransportError};

pub const LOCAL_ENCODER_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero_norm(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding vectors must have at least one dimension")]
    EmptyVector,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding endpoint: {0}")]
    Transport(#[from] TransportError),
    #[error("embedding response: {0}")]
    Malformed(String),
}

impl EmbedError {
    /// Whether a caller-level retry could help, and how many attempts were spent.
    pub fn retry_info(&self) -> Option<(bool, u32)> {
        match self {
            EmbedError::Transport(e) => Some((e.is_retryable(), e.attempts())),
            _ => None,
        }
    }
}

/// A sentence encoder with a fixed output dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Offline encoder: signed feature hashing of lowercased tokens, L2-normalized.
///
/// Text without tokens maps to the all-zeros vector.
#[derive(Debug, Clone)]
pub struct LocalHashEncoder {
    dim: usize,
}

impl Default for LocalHashEncoder {
    fn default() -> Self {
        Self { dim: LOCAL_ENCODER_DIM }
    }
}

impl LocalHashEncoder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0, "encoder dimension must be positive");
        Self { dim }
    }
}

impl EmbeddingProvider for LocalHashEncoder {
    fn name(&self) -> &str {
        "local-hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut values = vec![0.0; self.dim];
        for token in tokenize(text) {
            let digest = Sha256::digest(token.as_bytes());
            let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
            let bucket = (h % self.dim as u64) as usize;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector::new(values)
    }
}

/// Settings for an OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEncoderConfig {
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
    pub model: String,
    pub dim: usize,
}

/// Remote encoder. Failures surface as typed errors, never as zero vectors.
#[derive(Debug, Clone)]
pub struct RemoteEncoder {
    client: JsonClient,
    model: String,
    dim: usize,
}

impl RemoteEncoder {
    pub fn new(config: &RemoteEncoderConfig, api_key: Option<String>) -> Result<Self, EmbedError> {
        Ok(Self {
            client: JsonClient::new(&config.endpoint, api_key)?,
            model: config.model.clone(),
            dim: config.dim,
        })
    }

    fn parse(&self, body: &Value, expected: usize) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let data = body
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Malformed("missing 'data' array".into()))?;
        if data.len() != expected {
            return Err(EmbedError::Malformed(format!(
                "expected {expected} embeddings, got {}",
                data.len()
            )));
        }
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; expected];
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let values = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| EmbedError::Malformed("missing 'embedding'".into()))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| EmbedError::Malformed("non-numeric entry".into())))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != self.dim {
                return Err(EmbedError::DimensionMismatch {
                    left: values.len(),
                    right: self.dim,
                });
            }
            let slot = slots
                .get_mut(index)
                .ok_or_else(|| EmbedError::Malformed(format!("index {index} out of range")))?;
            *slot = Some(EmbeddingVector::new(values)?);
        }
        slots
            .into_iter()
            .map(|s| s.ok_or_else(|| EmbedError::Malformed("missing index".into())))
            .collect()
    }
}

impl EmbeddingProvider for RemoteEncoder {
    fn name(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let reply = self.client.post("embeddings", &json!({ "model": self.model, "input": texts }))?;
        self.parse(&reply.body, texts.len())
    }
}

/// Cosine similarity clamped to [-1, 1]; zero-norm input yields 0.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

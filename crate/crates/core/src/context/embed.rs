use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::remote::{RemoteConfig, RemoteError, DEFAULT_EMBEDDING_MODEL, ENV_EMBEDDING_MODEL};
use crate::scalar::VectorScalar;
use crate::util::bounded_map;

pub const LOCAL_EMBEDDING_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: VectorScalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        EmbeddingVector { values }
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector { values: vec![T::zero(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, factor: T) -> Self {
        EmbeddingVector { values: self.values.iter().map(|&v| v * factor).collect() }
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == T::zero() {
            self.clone()
        } else {
            self.scaled(T::one() / n)
        }
    }

    /// Cosine similarity clamped to [-1, 1]; 0 when either vector is zero.
    pub fn cosine(&self, other: &Self) -> T {
        let denom = self.norm() * other.norm();
        if denom == T::zero() {
            return T::zero();
        }
        (self.dot(other) / denom).max(-T::one()).min(T::one())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("nothing to embed")]
    EmptyInput,
    #[error("provider returned {found} vectors for {expected} texts")]
    CountMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, got {found} (text {position})")]
    DimensionMismatch { expected: usize, found: usize, position: usize },
    #[error("provider returned a zero-dimension vector")]
    ZeroDimension,
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

pub trait EmbeddingProvider<T: VectorScalar>: Send + Sync {
    /// Label recorded in run metadata and index sidecars.
    fn id(&self) -> String;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError>;
}

/// Embed `texts`, checking that the provider returned one vector per text
/// and a single dimension throughout.
pub fn embed<T: VectorScalar>(
    texts: &[String],
    provider: &dyn EmbeddingProvider<T>,
) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError> {
    if texts.is_empty() {
        return Err(EmbeddingError::EmptyInput);
    }
    let vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbeddingError::CountMismatch { expected: texts.len(), found: vectors.len() });
    }
    let dim = vectors[0].dim();
    if dim == 0 {
        return Err(EmbeddingError::ZeroDimension);
    }
    if let Some((position, v)) = vectors.iter().enumerate().find(|(_, v)| v.dim() != dim) {
        return Err(EmbeddingError::DimensionMismatch { expected: dim, found: v.dim(), position });
    }
    Ok(vectors)
}

/// Offline embedder: hashed character-trigram counts, L2-normalized.
///
/// Text is lowercased and padded with one space on each side, so a single
/// character still yields a trigram. Trigrams are hashed with 64-bit FNV-1a
/// over their UTF-8 bytes and reduced modulo `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrigramEmbedder {
    dim: usize,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        TrigramEmbedder { dim: LOCAL_EMBEDDING_DIM }
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

impl TrigramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        TrigramEmbedder { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_one<T: VectorScalar>(&self, text: &str) -> EmbeddingVector<T> {
        if text.is_empty() {
            return EmbeddingVector::zeros(self.dim);
        }
        let padded: Vec<char> = std::iter::once(' ')
            .chain(text.to_lowercase().chars())
            .chain(std::iter::once(' '))
            .collect();
        let mut counts = vec![0u32; self.dim];
        let mut buf = [0u8; 12];
        for w in padded.windows(3) {
            let mut n = 0;
            for c in w {
                n += c.encode_utf8(&mut buf[n..]).len();
            }
            counts[(fnv1a(&buf[..n]) % self.dim as u64) as usize] += 1;
        }
        let values = counts.into_iter().map(|c| T::from_u32(c).unwrap_or_else(T::zero)).collect();
        EmbeddingVector::new(values).normalized()
    }
}

impl<T: VectorScalar> EmbeddingProvider<T> for TrigramEmbedder {
    fn id(&self) -> String {
        format!("local-trigram-{}", self.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Embeddings over an OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    pub config: RemoteConfig,
    pub model: String,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteConfig, model: impl Into<String>) -> Self {
        RemoteEmbedder { config, model: model.into(), batch_size: 64, max_in_flight: 4 }
    }

    pub fn from_env() -> Result<Self, RemoteError> {
        let model = std::env::var(ENV_EMBEDDING_MODEL).unwrap_or_else(|_| DEFAULT_EMBEDDING_MODEL.to_string());
        Ok(Self::new(RemoteConfig::from_env()?, model))
    }

    fn request<T: VectorScalar>(&self, batch: &[String]) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError> {
        let reply = self.config.post_json("embeddings", &json!({ "model": self.model, "input": batch }))?;
        parse_embeddings(&reply, batch.len())
    }
}

fn parse_embeddings<T: VectorScalar>(reply: &Value, expected: usize) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError> {
    let malformed = |m: &str| EmbeddingError::Remote(RemoteError::Malformed(m.to_string()));
    let data = reply.get("data").and_then(Value::as_array).ok_or_else(|| malformed("missing data array"))?;
    let mut slots: Vec<Option<EmbeddingVector<T>>> = vec![None; expected];
    for (position, item) in data.iter().enumerate() {
        let index = item.get("index").and_then(Value::as_u64).map_or(position, |i| i as usize);
        let values = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing embedding"))?
            .iter()
            .map(|v| v.as_f64().and_then(T::from_f64).ok_or_else(|| malformed("non-numeric embedding value")))
            .collect::<Result<Vec<T>, _>>()?;
        let slot = slots.get_mut(index).ok_or_else(|| malformed("embedding index out of range"))?;
        *slot = Some(EmbeddingVector::new(values));
    }
    let found = slots.iter().filter(|s| s.is_some()).count();
    if found != expected {
        return Err(EmbeddingError::CountMismatch { expected, found });
    }
    Ok(slots.into_iter().flatten().collect())
}

impl<T: VectorScalar> EmbeddingProvider<T> for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError> {
        let batches: Vec<&[String]> = texts.chunks(self.batch_size.max(1)).collect();
        let results = bounded_map(&batches, self.max_in_flight, |b| self.request::<T>(b));
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}

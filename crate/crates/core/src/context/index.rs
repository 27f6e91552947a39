use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::chunk::Chunk;
use super::embed::{embed, EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::scalar::VectorScalar;

pub const DEFAULT_TOP_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("dimension mismatch: index has {expected}, vector has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate chunk id {0}")]
    DuplicateChunk(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index dimension must be positive")]
    ZeroDimension,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry<T> {
    pub chunk: Chunk,
    pub vector: EmbeddingVector<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex<T> {
    dim: usize,
    entries: Vec<IndexEntry<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<'a, T> {
    pub chunk: &'a Chunk,
    pub similarity: T,
}

impl<T: VectorScalar> VectorIndex<T> {
    pub fn new(dim: usize) -> Result<Self, IndexError> {
        if dim == 0 {
            return Err(IndexError::ZeroDimension);
        }
        Ok(VectorIndex { dim, entries: Vec::new() })
    }

    /// Embed every chunk and build an index. Nothing is returned unless all
    /// embeddings succeed.
    pub fn build(chunks: Vec<Chunk>, provider: &dyn EmbeddingProvider<T>) -> Result<Self, IndexError> {
        if chunks.is_empty() {
            return Err(IndexError::Embedding(EmbeddingError::EmptyInput));
        }
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let vectors = embed(&texts, provider)?;
        Self::from_entries(vectors[0].dim(), chunks.into_iter().zip(vectors).map(|(chunk, vector)| IndexEntry { chunk, vector }))
    }

    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = IndexEntry<T>>) -> Result<Self, IndexError> {
        let mut index = Self::new(dim)?;
        for e in entries {
            index.insert(e.chunk, e.vector)?;
        }
        Ok(index)
    }

    pub fn insert(&mut self, chunk: Chunk, vector: EmbeddingVector<T>) -> Result<(), IndexError> {
        if vector.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, found: vector.dim() });
        }
        let id = chunk.id();
        if self.entries.iter().any(|e| e.chunk.id() == id) {
            return Err(IndexError::DuplicateChunk(id));
        }
        self.entries.push(IndexEntry { chunk, vector });
        Ok(())
    }

    /// Check invariants of an index read from disk.
    pub fn verify(&self) -> Result<(), IndexError> {
        if self.dim == 0 {
            return Err(IndexError::ZeroDimension);
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.vector.dim() != self.dim {
                return Err(IndexError::DimensionMismatch { expected: self.dim, found: e.vector.dim() });
            }
            if !seen.insert(e.chunk.id()) {
                return Err(IndexError::DuplicateChunk(e.chunk.id()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry<T>] {
        &self.entries
    }

    /// Brute-force cosine ranking. Ties go to the lower (doc_id, seq).
    pub fn retrieve_top_k(&self, query: &EmbeddingVector<T>, k: usize) -> Result<Vec<Hit<'_, T>>, IndexError> {
        if k < 1 {
            return Err(IndexError::InvalidK);
        }
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, found: query.dim() });
        }
        let mut hits: Vec<Hit<'_, T>> = self
            .entries
            .iter()
            .map(|e| Hit { chunk: &e.chunk, similarity: e.vector.cosine(query) })
            .collect();
        hits.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.chunk.doc_id.cmp(&b.chunk.doc_id))
                .then_with(|| a.chunk.seq.cmp(&b.chunk.seq))
        });
        hits.truncate(k);
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::chunk::{split_text, ChunkParams};
    use crate::context::embed::TrigramEmbedder;

    fn chunk(doc: &str, seq: usize) -> Chunk {
        Chunk { doc_id: doc.into(), seq, start_char: seq, end_char: seq + 1, text: format!("{doc}{seq}") }
    }

    fn axes() -> VectorIndex<f64> {
        let mut idx = VectorIndex::new(3).unwrap();
        for i in 0..3 {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            idx.insert(chunk("d", i), EmbeddingVector::new(v)).unwrap();
        }
        idx
    }

    #[test]
    fn orthogonal_axes() {
        let idx = axes();
        let hits = idx.retrieve_top_k(&EmbeddingVector::new(vec![0.0, 1.0, 0.0]), 3).unwrap();
        let got: Vec<(usize, f64)> = hits.iter().map(|h| (h.chunk.seq, h.similarity)).collect();
        // ties at 0 keep seq order
        assert_eq!(got, vec![(1, 1.0), (0, 0.0), (2, 0.0)]);
    }

    #[test]
    fn k_is_clamped_and_validated() {
        let idx = axes();
        let q = EmbeddingVector::new(vec![1.0, 1.0, 1.0]);
        assert_eq!(idx.retrieve_top_k(&q, 10).unwrap().len(), 3);
        assert_eq!(idx.retrieve_top_k(&q, 0), Err(IndexError::InvalidK));
        let wrong = EmbeddingVector::new(vec![1.0, 1.0]);
        assert_eq!(idx.retrieve_top_k(&wrong, 1), Err(IndexError::DimensionMismatch { expected: 3, found: 2 }));
        let empty = VectorIndex::<f64>::new(3).unwrap();
        assert!(empty.retrieve_top_k(&q, 1).unwrap().is_empty());
    }

    #[test]
    fn ties_order_by_doc_then_seq() {
        let mut idx = VectorIndex::new(1).unwrap();
        for (d, s) in [("b", 0), ("a", 1), ("a", 0)] {
            idx.insert(chunk(d, s), EmbeddingVector::new(vec![1.0f32])).unwrap();
        }
        let ids: Vec<String> =
            idx.retrieve_top_k(&EmbeddingVector::new(vec![1.0]), 3).unwrap().iter().map(|h| h.chunk.id()).collect();
        assert_eq!(ids, vec!["a#0", "a#1", "b#0"]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut idx = axes();
        assert_eq!(
            idx.insert(chunk("d", 0), EmbeddingVector::new(vec![1.0, 0.0, 0.0])),
            Err(IndexError::DuplicateChunk("d#0".into()))
        );
    }

    #[test]
    fn build_and_serde_round_trip() {
        let text: String = (0..40).map(|i| format!("sentence number {i} about product families. ")).collect();
        let chunks = split_text("context", &text, ChunkParams::new(200, 50).unwrap()).unwrap();
        let n = chunks.len();
        let idx = VectorIndex::<f64>::build(chunks, &TrigramEmbedder::default()).unwrap();
        assert_eq!(idx.len(), n);
        let json = serde_json::to_string(&idx).unwrap();
        let back: VectorIndex<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, idx);
        back.verify().unwrap();
    }
}

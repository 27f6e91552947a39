use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CHUNK_SIZE: usize = 1000;
pub const DEFAULT_OVERLAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams { chunk_size: DEFAULT_CHUNK_SIZE, overlap: DEFAULT_OVERLAP }
    }
}

impl ChunkParams {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, ChunkError> {
        if chunk_size == 0 || overlap >= chunk_size {
            return Err(ChunkError::InvalidParams { chunk_size, overlap });
        }
        Ok(ChunkParams { chunk_size, overlap })
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChunkError {
    #[error("chunk size must exceed overlap (chunk_size={chunk_size}, overlap={overlap})")]
    InvalidParams { chunk_size: usize, overlap: usize },
    #[error("document {0} is empty")]
    EmptyText(String),
}

/// A character range `[start_char, end_char)` of one document. Offsets count
/// Unicode scalar values, not bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub seq: usize,
    pub start_char: usize,
    pub end_char: usize,
    pub text: String,
}

impl Chunk {
    pub fn id(&self) -> String {
        format!("{}#{}", self.doc_id, self.seq)
    }

    pub fn len_chars(&self) -> usize {
        self.end_char - self.start_char
    }
}

/// Sliding-window split: chunks start at multiples of
/// `chunk_size - overlap` and the last one ends at the text length.
pub fn split_text(doc_id: &str, text: &str, params: ChunkParams) -> Result<Vec<Chunk>, ChunkError> {
    let params = ChunkParams::new(params.chunk_size, params.overlap)?;
    if text.is_empty() {
        return Err(ChunkError::EmptyText(doc_id.to_string()));
    }
    let chars: Vec<char> = text.chars().collect();
    let len = chars.len();
    let mut chunks = Vec::with_capacity(len.div_ceil(params.stride()));
    let mut start = 0;
    loop {
        let end = (start + params.chunk_size).min(len);
        chunks.push(Chunk {
            doc_id: doc_id.to_string(),
            seq: chunks.len(),
            start_char: start,
            end_char: end,
            text: chars[start..end].iter().collect(),
        });
        if end == len {
            break;
        }
        start += params.stride();
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds(len: usize, size: usize, overlap: usize) -> Vec<(usize, usize)> {
        let text = "x".repeat(len);
        split_text("d", &text, ChunkParams::new(size, overlap).unwrap())
            .unwrap()
            .iter()
            .map(|c| (c.start_char, c.end_char))
            .collect()
    }

    #[test]
    fn default_window_on_2200_chars() {
        assert_eq!(bounds(2200, 1000, 200), vec![(0, 1000), (800, 1800), (1600, 2200)]);
    }

    #[test]
    fn short_and_exact_texts_give_one_chunk() {
        assert_eq!(bounds(500, 1000, 200), vec![(0, 500)]);
        assert_eq!(bounds(1000, 1000, 200), vec![(0, 1000)]);
        assert_eq!(bounds(1001, 1000, 200), vec![(0, 1000), (800, 1001)]);
    }

    #[test]
    fn offsets_count_characters() {
        let text = "é".repeat(5);
        let chunks = split_text("d", &text, ChunkParams::new(2, 0).unwrap()).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(chunks[2].text, "é");
        assert_eq!(chunks[1].id(), "d#1");
    }

    #[test]
    fn parameter_and_input_errors() {
        assert!(ChunkParams::new(200, 200).is_err());
        assert!(ChunkParams::new(0, 0).is_err());
        let bad = ChunkParams { chunk_size: 10, overlap: 10 };
        assert!(matches!(split_text("d", "abc", bad), Err(ChunkError::InvalidParams { .. })));
        assert_eq!(split_text("d", "", ChunkParams::default()), Err(ChunkError::EmptyText("d".into())));
    }
}

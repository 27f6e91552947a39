//! Context corpora: chunking, embedding and nearest-neighbour retrieval.

mod chunk;
mod embed;
mod index;

pub use chunk::{split_text, Chunk, ChunkError, ChunkParams, DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP};
pub use embed::{embed, EmbeddingError, EmbeddingProvider, EmbeddingVector, RemoteEmbedder, TrigramEmbedder, LOCAL_EMBEDDING_DIM};
pub use index::{Hit, IndexEntry, IndexError, VectorIndex, DEFAULT_TOP_K};

//! Caption normalization, vocabulary and word2vec pretraining.

mod normalize;
mod vocab;
mod word2vec;

pub use normalize::{normalize_caption, tokenize};
pub use vocab::{TokenSeq, Vocabulary, EOS, PAD, RESERVED, SOS, UNK};
pub use word2vec::{
    read_embeddings, train_word2vec, write_embeddings, EmbeddingMatrix, Word2VecConfig,
    Word2VecMode, Word2VecOutput,
};

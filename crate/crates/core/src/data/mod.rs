//! Examples, tokenization, vocabularies, embeddings, batching, the task
//! registry and synthetic task generators.

mod batch;
mod embeddings;
mod example;
pub mod synthetic;
pub mod tasks;
mod tokenizer;
pub mod vocab;

pub use batch::{make_batches, shuffled_order, Batch};
pub use embeddings::{char_ngram_buckets, load_embeddings, parse_embeddings, Embedder, Pretrained};
pub use example::{read_jsonl, write_jsonl, EncodedExample, Example, Record};
pub use synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};
pub use tasks::{preprocess, preprocess_eval, registry, Difficulty, Rule, TaskSpec};
pub use tokenizer::{detokenize, join_words, tokenize, words, Token};
pub use vocab::{ExtendedVocab, Vocabulary};

//! Word vectors: a text-file loader for frozen pretrained vectors, and a
//! trained character-trigram bag that is always present.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, ParamId, ParamSet, Tensor};

/// Frozen word vectors of a fixed width; absent words map to zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pretrained {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl Pretrained {
    pub fn new(dim: usize, vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        if let Some((w, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Invalid(format!(
                "vector for `{w}` has {} values, expected {dim}",
                v.len()
            )));
        }
        Ok(Pretrained { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }

    pub fn lookup(&self, word: &str) -> Vec<f64> {
        self.vectors
            .get(word)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.dim])
    }
}

/// Reads `word v1 … v_dim` lines. Blank lines are skipped.
pub fn load_embeddings(path: impl AsRef<Path>, dim: usize) -> Result<Pretrained> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, dim).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

pub fn parse_embeddings(text: &str, dim: usize) -> Result<Pretrained> {
    let mut vectors = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let bad = |message: String| Error::Parse {
            path: "<embeddings>".into(),
            line: i + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("`{f}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(bad(format!("expected {dim} values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        vectors.insert(word.to_string(), values);
    }
    Pretrained::new(dim, vectors)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hash buckets for the character trigrams of `<word>` plus the whole word.
pub fn char_ngram_buckets(word: &str, buckets: usize) -> Vec<usize> {
    let padded: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out: Vec<usize> = padded
        .windows(3)
        .map(|w| {
            let s: String = w.iter().collect();
            (fnv1a(s.as_bytes()) % buckets as u64) as usize
        })
        .collect();
    let whole = format!("<{word}>");
    out.push((fnv1a(whole.as_bytes()) % buckets as u64) as usize);
    out
}

/// Maps words to `[pretrained; char-trigram bag]` rows.
#[derive(Debug, Clone)]
pub struct Embedder {
    table: ParamId,
    buckets: usize,
    char_dim: usize,
    pretrained: Option<Pretrained>,
}

impl Embedder {
    pub fn new(
        params: &mut ParamSet,
        buckets: usize,
        char_dim: usize,
        pretrained: Option<Pretrained>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if buckets == 0 || char_dim == 0 {
            return Err(Error::Invalid("embedder needs buckets and char_dim > 0".into()));
        }
        let table = Tensor::uniform(buckets, char_dim, 0.5, rng);
        Ok(Embedder {
            table: params.add("embed.char_ngrams", table)?,
            buckets,
            char_dim,
            pretrained,
        })
    }

    pub fn dim(&self) -> usize {
        self.char_dim + self.pretrained.as_ref().map_or(0, Pretrained::dim)
    }

    pub fn forward<S: AsRef<str>>(&self, g: &mut Graph, words: &[S]) -> Result<NodeId> {
        let bags = words
            .iter()
            .map(|w| char_ngram_buckets(w.as_ref(), self.buckets))
            .collect();
        let table = g.param(self.table);
        let chars = g.embed_bag(table, bags)?;
        match &self.pretrained {
            None => Ok(chars),
            Some(p) => {
                let mut data = Vec::with_capacity(words.len() * p.dim());
                for w in words {
                    data.extend(p.lookup(w.as_ref()));
                }
                let frozen = g.constant(Tensor::from_vec(&[words.len(), p.dim()], data)?);
                g.concat_cols(&[frozen, chars])
            }
        }
    }
}

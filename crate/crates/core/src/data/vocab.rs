//! Generative vocabulary and the per-example extended vocabulary that unions
//! context types, question types and generative words.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EOS: usize = 0;
pub const INIT: usize = 1;
pub const UNK: usize = 2;
pub const RESERVED: [&str; 3] = ["<eos>", "<init>", "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary { words, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    /// The reserved tokens followed by the `size - 3` most frequent words;
    /// equal counts are ordered lexicographically.
    pub fn build<I, S>(streams: I, size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if size <= RESERVED.len() {
            return Err(Error::Invalid(format!(
                "vocabulary size {size} leaves no room beyond the {} reserved tokens",
                RESERVED.len()
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut total = 0usize;
        for w in streams {
            let w = w.as_ref();
            total += 1;
            if RESERVED.contains(&w) {
                continue;
            }
            *counts.entry(w.to_string()).or_default() += 1;
        }
        if total == 0 {
            return Err(Error::Invalid("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let words: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(size - RESERVED.len()).map(|(w, _)| w))
            .collect();
        Ok(words.into())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Id of `word`, or [`UNK`] when it is out of vocabulary.
    pub fn id_or_unk(&self, word: &str) -> usize {
        self.id(word).unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Union of one example's context types, question types and the generative
/// vocabulary. Extended ids list context types first (in order of first
/// occurrence), then question types not in the context, then vocabulary
/// words not already present.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vocab_to_ext: Vec<usize>,
    ext_to_vocab: Vec<Option<usize>>,
    context_ids: Vec<usize>,
    question_ids: Vec<usize>,
}

impl ExtendedVocab {
    pub fn new<S: AsRef<str>>(context: &[S], question: &[S], vocab: &Vocabulary) -> Self {
        let mut words: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |w: &str, words: &mut Vec<String>| -> usize {
            *index.entry(w.to_string()).or_insert_with(|| {
                words.push(w.to_string());
                words.len() - 1
            })
        };
        let context_ids: Vec<usize> = context.iter().map(|w| intern(w.as_ref(), &mut words)).collect();
        let question_ids: Vec<usize> = question.iter().map(|w| intern(w.as_ref(), &mut words)).collect();
        let vocab_to_ext: Vec<usize> = vocab.words().iter().map(|w| intern(w, &mut words)).collect();
        let mut ext_to_vocab = vec![None; words.len()];
        for (v, &e) in vocab_to_ext.iter().enumerate() {
            ext_to_vocab[e] = Some(v);
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        ExtendedVocab {
            words,
            index,
            vocab_to_ext,
            ext_to_vocab,
            context_ids,
            question_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, ext: usize) -> &str {
        &self.words[ext]
    }

    /// Extended id of `word`; unreachable words map to the `<unk>` entry.
    pub fn id_or_unk(&self, word: &str) -> usize {
        self.index
            .get(word)
            .copied()
            .unwrap_or(self.vocab_to_ext[UNK])
    }

    pub fn eos(&self) -> usize {
        self.vocab_to_ext[EOS]
    }

    pub fn vocab_to_ext(&self) -> &[usize] {
        &self.vocab_to_ext
    }

    pub fn vocab_id(&self, ext: usize) -> Option<usize> {
        self.ext_to_vocab[ext]
    }

    /// Extended id of each context position.
    pub fn context_ids(&self) -> &[usize] {
        &self.context_ids
    }

    pub fn question_ids(&self) -> &[usize] {
        &self.question_ids
    }

    /// Where a target word can come from: its vocabulary id and the context
    /// and question positions holding it.
    pub fn sources(&self, ext: usize) -> Sources {
        Sources {
            vocab: self.ext_to_vocab[ext],
            context: positions(&self.context_ids, ext),
            question: positions(&self.question_ids, ext),
        }
    }
}

fn positions(ids: &[usize], ext: usize) -> Vec<usize> {
    ids.iter()
        .enumerate()
        .filter(|(_, &e)| e == ext)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sources {
    pub vocab: Option<usize>,
    pub context: Vec<usize>,
    pub question: Vec<usize>,
}

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenizer::{tokenize, words, Token};
use super::vocab::{ExtendedVocab, Vocabulary};
use crate::error::{Error, Result};

/// On-disk record: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub context: String,
    pub question: String,
    pub answer: String,
    pub task: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub task: String,
    pub context: String,
    pub question: String,
    pub answer: String,
    pub context_tokens: Vec<Token>,
    pub question_tokens: Vec<Token>,
    pub answer_tokens: Vec<Token>,
}

impl Example {
    pub fn new(
        task: impl Into<String>,
        context: impl Into<String>,
        question: impl Into<String>,
        answer: impl Into<String>,
    ) -> Result<Self> {
        let (context, question, answer) = (context.into(), question.into(), answer.into());
        let ex = Example {
            task: task.into(),
            context_tokens: tokenize(&context),
            question_tokens: tokenize(&question),
            answer_tokens: tokenize(&answer),
            context,
            question,
            answer,
        };
        if ex.answer_words().is_empty() {
            return Err(Error::Invalid(format!("empty answer in a `{}` example", ex.task)));
        }
        Ok(ex)
    }

    pub fn from_record(r: Record) -> Result<Self> {
        Example::new(r.task, r.context, r.question, r.answer)
    }

    pub fn to_record(&self) -> Record {
        Record {
            context: self.context.clone(),
            question: self.question.clone(),
            answer: self.answer.clone(),
            task: self.task.clone(),
        }
    }

    pub fn context_words(&self) -> Vec<String> {
        words(&self.context_tokens)
    }

    pub fn question_words(&self) -> Vec<String> {
        words(&self.question_tokens)
    }

    pub fn answer_words(&self) -> Vec<String> {
        words(&self.answer_tokens)
    }

    /// Every word of context, question and answer, for vocabulary counting.
    pub fn all_words(&self) -> Vec<String> {
        let mut w = self.context_words();
        w.extend(self.question_words());
        w.extend(self.answer_words());
        w
    }
}

/// An example resolved against the generative vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub task: String,
    pub context: Vec<String>,
    pub question: Vec<String>,
    pub answer: Vec<String>,
    pub ext: ExtendedVocab,
    /// Extended ids of the answer words followed by `<eos>`; words reachable
    /// from no source become `<unk>`.
    pub target: Vec<usize>,
}

impl EncodedExample {
    pub fn new(ex: &Example, vocab: &Vocabulary) -> Result<Self> {
        let (context, question, answer) = (ex.context_words(), ex.question_words(), ex.answer_words());
        if context.is_empty() || question.is_empty() {
            return Err(Error::Invalid(format!(
                "`{}` example needs a nonempty context and question",
                ex.task
            )));
        }
        let ext = ExtendedVocab::new(&context, &question, vocab);
        let mut target: Vec<usize> = answer.iter().map(|w| ext.id_or_unk(w)).collect();
        target.push(ext.eos());
        Ok(EncodedExample {
            task: ex.task.clone(),
            context,
            question,
            answer,
            ext,
            target,
        })
    }

    /// Batching cost `l + m + 5n` in words.
    pub fn cost(&self) -> usize {
        self.context.len() + self.question.len() + 5 * self.answer.len()
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: Record = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        out.push(Example::from_record(record).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    for ex in examples {
        let line = serde_json::to_string(&ex.to_record())?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

//! Run configuration: a TOML file naming model sizes, the schedule, the
//! curriculum and the datasets. Unknown keys are rejected.
//!
//! ```toml
//! seed = 0
//! iterations = 2000
//! budget = 240
//! output_dir = "runs/copy"
//!
//! [model]
//! d = 32
//!
//! [[tasks]]
//! name = "copy_span"
//! train = { synthetic = { kind = "copy_span", count = 4000, seed = 1 } }
//! valid = { synthetic = { kind = "copy_span", count = 500, seed = 2 } }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::tasks::lookup;
use crate::data::{
    generate_synthetic, load_embeddings, preprocess, preprocess_eval, read_jsonl, Example, SyntheticKind,
    SyntheticSpec, TaskSpec, Vocabulary,
};
use crate::error::{Error, Result};
use crate::model::{ModelDims, Mqan};
use crate::trainer::{AdamConfig, CurriculumSpec, ScheduleSpec, TaskData, TrainOptions};

/// Where a split comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    /// JSON-lines file of `{context, question, answer}` records.
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Registry name; selects metric and preprocessing.
    pub name: String,
    pub train: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<Source>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: usize,
    pub budget: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub validate_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_limit: Option<usize>,
    pub threads: usize,
    pub output_dir: PathBuf,
    /// Pretrained word vectors; requires `model.word_dim` to match.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    pub model: ModelDims,
    pub schedule: ScheduleSpec,
    pub adam: AdamConfig,
    pub curriculum: CurriculumSpec,
    pub tasks: Vec<TaskConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            iterations: 0,
            budget: 10_000,
            dropout: 0.2,
            max_len: crate::decoder::DEFAULT_MAX_LEN,
            validate_every: 500,
            validation_limit: None,
            threads: 1,
            output_dir: PathBuf::from("runs"),
            embeddings: None,
            model: ModelDims::full_size(),
            schedule: ScheduleSpec::default(),
            adam: AdamConfig::default(),
            curriculum: CurriculumSpec::fully_joint(),
            tasks: Vec::new(),
        }
    }
}

fn bad(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

impl RunConfig {
    /// Desk-scale profile over synthetic tasks: 4000 training and 500
    /// held-out examples each. `Mixed` trains all three jointly.
    pub fn toy(kind: SyntheticKind) -> Self {
        let kinds = match kind {
            SyntheticKind::Mixed => vec![SyntheticKind::CopySpan, SyntheticKind::Classify, SyntheticKind::Generate],
            k => vec![k],
        };
        let tasks = kinds
            .iter()
            .map(|&k| TaskConfig {
                name: k.task_name().into(),
                train: Source::Synthetic(SyntheticSpec::new(k, 4000, 1)),
                valid: Some(Source::Synthetic(SyntheticSpec::new(k, 500, 2))),
            })
            .collect();
        RunConfig {
            iterations: 2000 * kinds.len(),
            budget: 240,
            validate_every: 0,
            max_len: 20,
            output_dir: PathBuf::from("runs").join(kind.task_name()),
            model: ModelDims::toy(),
            tasks,
            ..RunConfig::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad("config", e.message()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| bad("config", e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| bad(path.display().to_string(), e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    /// Checks everything that can be checked without training, including
    /// that every dataset file exists.
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(bad("dropout", "must lie in [0, 1)"));
        }
        if self.budget == 0 {
            return Err(bad("budget", "must be positive"));
        }
        if self.threads == 0 {
            return Err(bad("threads", "must be at least 1"));
        }
        if self.max_len == 0 {
            return Err(bad("max_len", "must be positive"));
        }
        if !self.model.d.is_multiple_of(2) || self.model.d == 0 {
            return Err(bad("model.d", "must be even and positive"));
        }
        if self.model.heads == 0 {
            return Err(bad("model.heads", "must be at least 1"));
        }
        if self.model.vocab <= 3 {
            return Err(bad("model.vocab", "must exceed the three reserved tokens"));
        }
        match (&self.embeddings, self.model.word_dim) {
            (None, 0) => {}
            (None, _) => return Err(bad("embeddings", "model.word_dim is set but no vector file is given")),
            (Some(_), 0) => return Err(bad("model.word_dim", "must be the width of the vector file")),
            (Some(p), _) if !p.is_file() => return Err(bad("embeddings", format!("no such file: {}", p.display()))),
            _ => {}
        }
        if self.tasks.is_empty() {
            return Err(bad("tasks", "at least one task is required"));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if lookup(&t.name).is_none() {
                return Err(bad(format!("tasks[{i}].name"), format!("unknown task `{}`", t.name)));
            }
            if self.tasks[..i].iter().any(|u| u.name == t.name) {
                return Err(bad(format!("tasks[{i}].name"), format!("task `{}` listed twice", t.name)));
            }
            let splits = [("train", Some(&t.train)), ("valid", t.valid.as_ref())];
            for (split, source) in splits {
                if let Some(Source::Path(p)) = source {
                    if !p.is_file() {
                        return Err(bad(format!("tasks[{i}].{split}.path"), format!("no such file: {}", p.display())));
                    }
                }
            }
        }
        if self.curriculum.switch > 0 && self.curriculum.phase_one(&self.task_specs()?).is_empty() {
            return Err(bad("curriculum.strategy", "no configured task belongs to phase one"));
        }
        Ok(())
    }

    pub fn task_specs(&self) -> Result<Vec<TaskSpec>> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, t)| lookup(&t.name).ok_or_else(|| bad(format!("tasks[{i}].name"), format!("unknown task `{}`", t.name))))
            .collect()
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            iterations: self.iterations,
            budget: self.budget,
            dropout: self.dropout,
            schedule: self.schedule,
            adam: self.adam,
            curriculum: self.curriculum,
            seed: self.seed,
            threads: self.threads,
            validate_every: self.validate_every,
            validation_limit: self.validation_limit.unwrap_or(usize::MAX),
            max_len: self.max_len,
            output_dir: Some(self.output_dir.clone()),
            embeddings: self.embeddings.as_ref().map(|p| p.display().to_string()),
        }
    }

    /// Reads or generates every split and applies task preprocessing.
    pub fn load_examples(&self) -> Result<Vec<RawTask>> {
        self.validate()?;
        let specs = self.task_specs()?;
        self.tasks
            .iter()
            .zip(specs)
            .map(|(t, spec)| {
                let train = read_source(&t.train)?
                    .iter()
                    .filter_map(|e| preprocess(e, &spec).transpose())
                    .collect::<Result<Vec<_>>>()?;
                let valid = match &t.valid {
                    Some(s) => read_source(s)?
                        .iter()
                        .filter_map(|e| preprocess_eval(e, &spec).transpose())
                        .collect::<Result<Vec<_>>>()?,
                    None => Vec::new(),
                };
                Ok(RawTask { spec, train, valid })
            })
            .collect()
    }

    /// Loads the data, builds the vocabulary from every training split and
    /// initializes the model from `seed`.
    pub fn prepare(&self) -> Result<(Mqan, Vec<TaskData>)> {
        let raw = self.load_examples()?;
        let words = raw.iter().flat_map(|t| t.train.iter().flat_map(Example::all_words));
        let vocab = Vocabulary::build(words, self.model.vocab)?;
        let model = self.build_model(vocab)?;
        let tasks = raw
            .into_iter()
            .map(|t| {
                let enc = |xs: Vec<Example>| xs.iter().map(|e| model.encode_example(e)).collect::<Result<Vec<_>>>();
                Ok(TaskData { spec: t.spec, train: enc(t.train)?, valid: enc(t.valid)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((model, tasks))
    }

    pub fn build_model(&self, vocab: Vocabulary) -> Result<Mqan> {
        let pretrained = match &self.embeddings {
            Some(p) => Some(load_embeddings(p, self.model.word_dim)?),
            None => None,
        };
        Mqan::new(self.model, vocab, pretrained, self.seed)
    }
}

/// One task's preprocessed examples, before vocabulary encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTask {
    pub spec: TaskSpec,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
}

pub fn read_source(source: &Source) -> Result<Vec<Example>> {
    match source {
        Source::Path(p) => read_jsonl(p),
        Source::Synthetic(spec) => generate_synthetic(spec),
    }
}

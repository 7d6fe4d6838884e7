//! Task registry: metric bindings, preprocessing rules and difficulty
//! classes for the ten benchmark tasks and the synthetic analogs.

use serde::{Deserialize, Serialize};

use super::example::Example;
use super::tokenizer::detokenize;
use crate::error::Result;
use crate::metrics::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "arg")]
pub enum Rule {
    None,
    /// Drop training examples whose context has more than this many words.
    ExcludeOver(usize),
    /// Keep only the first this-many context words.
    TruncateTo(usize),
    /// Drop examples whose answer is `-` (unlabeled).
    DropDashLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Difficult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub metric: Metric,
    pub rule: Rule,
    pub difficulty: Difficulty,
    /// Benchmark task whose role a synthetic task plays in schedules.
    pub analog: Option<String>,
    /// (train, validation, test) sizes; metadata only.
    pub sizes: Option<(usize, usize, usize)>,
}

impl TaskSpec {
    fn real(name: &str, metric: Metric, rule: Rule, difficulty: Difficulty, sizes: (usize, usize, usize)) -> Self {
        TaskSpec {
            name: name.into(),
            metric,
            rule,
            difficulty,
            analog: None,
            sizes: Some(sizes),
        }
    }

    fn synthetic(name: &str, analog: &str, difficulty: Difficulty) -> Self {
        TaskSpec {
            name: name.into(),
            metric: Metric::Em,
            rule: Rule::None,
            difficulty,
            analog: Some(analog.into()),
            sizes: None,
        }
    }

    /// True if this task is `name` or stands in for it.
    pub fn plays(&self, name: &str) -> bool {
        self.name == name || self.analog.as_deref() == Some(name)
    }
}

pub const DECATHLON: [&str; 10] = [
    "squad", "iwslt", "cnn_dm", "mnli", "sst", "qa_srl", "qa_zre", "woz", "wikisql", "mwsc",
];

pub const SYNTHETIC: [&str; 3] = ["copy_span", "classify", "generate"];

/// The ten benchmark tasks in decathlon order, then the synthetic tasks.
pub fn registry() -> Vec<TaskSpec> {
    use Difficulty::*;
    vec![
        TaskSpec::real("squad", Metric::Nf1, Rule::ExcludeOver(400), Difficult, (87599, 10570, 9616)),
        TaskSpec::real("iwslt", Metric::Bleu, Rule::None, Difficult, (196884, 993, 1305)),
        TaskSpec::real("cnn_dm", Metric::Rouge, Rule::TruncateTo(400), Difficult, (287227, 13368, 11490)),
        TaskSpec::real("mnli", Metric::Em, Rule::DropDashLabel, Difficult, (392702, 20000, 20000)),
        TaskSpec::real("sst", Metric::Em, Rule::None, Easy, (6920, 872, 1821)),
        TaskSpec::real("qa_srl", Metric::Nf1, Rule::None, Easy, (6414, 2183, 2201)),
        TaskSpec::real("qa_zre", Metric::Cf1, Rule::None, Easy, (840000, 600, 12000)),
        TaskSpec::real("woz", Metric::DsEm, Rule::None, Easy, (2536, 830, 1646)),
        TaskSpec::real("wikisql", Metric::LfEm, Rule::None, Easy, (56355, 8421, 15878)),
        TaskSpec::real("mwsc", Metric::Em, Rule::None, Easy, (80, 82, 100)),
        TaskSpec::synthetic("copy_span", "squad", Difficult),
        TaskSpec::synthetic("classify", "sst", Easy),
        TaskSpec::synthetic("generate", "iwslt", Difficult),
    ]
}

pub fn lookup(name: &str) -> Option<TaskSpec> {
    registry().into_iter().find(|t| t.name == name)
}

fn lowercase(ex: &Example) -> Result<Example> {
    Example::new(
        ex.task.clone(),
        ex.context.to_lowercase(),
        ex.question.to_lowercase(),
        ex.answer.to_lowercase(),
    )
}

fn context_words(ex: &Example) -> usize {
    ex.context_tokens.iter().filter(|t| !t.is_whitespace()).count()
}

/// Training-time preprocessing: applies the task rule and lowercases.
/// Returns `None` for dropped examples.
pub fn preprocess(ex: &Example, spec: &TaskSpec) -> Result<Option<Example>> {
    apply(ex, spec, true)
}

/// Evaluation-time preprocessing: length exclusion is not applied.
pub fn preprocess_eval(ex: &Example, spec: &TaskSpec) -> Result<Option<Example>> {
    apply(ex, spec, false)
}

fn apply(ex: &Example, spec: &TaskSpec, training: bool) -> Result<Option<Example>> {
    match spec.rule {
        Rule::None => {}
        Rule::ExcludeOver(limit) => {
            if training && context_words(ex) > limit {
                return Ok(None);
            }
        }
        Rule::TruncateTo(limit) => {
            if context_words(ex) > limit {
                let mut kept = Vec::new();
                let mut n = 0;
                for t in &ex.context_tokens {
                    if !t.is_whitespace() {
                        if n == limit {
                            break;
                        }
                        n += 1;
                    }
                    kept.push(t.clone());
                }
                if let Some(last) = kept.last_mut() {
                    last.space_after = false;
                }
                let truncated = Example::new(ex.task.clone(), detokenize(&kept), ex.question.clone(), ex.answer.clone())?;
                return lowercase(&truncated).map(Some);
            }
        }
        Rule::DropDashLabel => {
            if ex.answer.trim() == "-" {
                return Ok(None);
            }
        }
    }
    lowercase(ex).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_context(n: usize) -> Example {
        let ctx: Vec<String> = (0..n).map(|i| format!("W{i}")).collect();
        Example::new("squad", ctx.join(" "), "Q", "A").unwrap()
    }

    #[test]
    fn exclusion_only_in_training() {
        let spec = lookup("squad").unwrap();
        assert!(preprocess(&with_context(401), &spec).unwrap().is_none());
        assert!(preprocess(&with_context(400), &spec).unwrap().is_some());
        assert!(preprocess_eval(&with_context(401), &spec).unwrap().is_some());
    }

    #[test]
    fn truncation_keeps_prefix() {
        let spec = lookup("cnn_dm").unwrap();
        let out = preprocess(&with_context(500), &spec).unwrap().unwrap();
        let words = out.context_words();
        assert_eq!(words.len(), 400);
        assert_eq!(words[399], "w399");
        assert_eq!(out.context_tokens.len(), 400);
    }

    #[test]
    fn plain_rule_only_lowercases() {
        let spec = lookup("sst").unwrap();
        let ex = Example::new("sst", "Great  Film", "Is it?", "Positive").unwrap();
        let out = preprocess(&ex, &spec).unwrap().unwrap();
        assert_eq!(out.context, "great  film");
        assert_eq!(out.answer, "positive");
    }

    #[test]
    fn dash_label_dropped() {
        let spec = lookup("mnli").unwrap();
        let ex = Example::new("mnli", "p", "h", "-").unwrap();
        assert!(preprocess(&ex, &spec).unwrap().is_none());
    }

    #[test]
    fn registry_covers_decathlon() {
        let reg = registry();
        for name in DECATHLON {
            assert!(reg.iter().any(|t| t.name == name));
        }
        assert!(lookup("classify").unwrap().plays("sst"));
    }
}

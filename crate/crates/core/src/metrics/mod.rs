//! Task metrics on a 0 to 100 scale, and the decaScore sum.

mod dialogue;
mod overlap;
mod report;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dialogue::{accumulate, ds_em, BeliefState};
pub use overlap::{corpus_bleu, rouge_avg, rouge_scores};
pub use report::{EvaluationReport, TaskScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Nf1,
    Em,
    Bleu,
    Rouge,
    Cf1,
    DsEm,
    LfEm,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Nf1 => "nF1",
            Metric::Em => "EM",
            Metric::Bleu => "BLEU",
            Metric::Rouge => "ROUGE",
            Metric::Cf1 => "cF1",
            Metric::DsEm => "dsEM",
            Metric::LfEm => "lfEM",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: Metric,
    pub value: f64,
    pub count: usize,
}

impl MetricValue {
    pub fn new(metric: Metric, value: f64, count: usize) -> Self {
        debug_assert!((0.0..=100.0 + 1e-9).contains(&value), "{metric} = {value}");
        MetricValue { metric, value, count }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Reserved answer marking "no answer" for relation extraction.
pub const NULL_ANSWER: &str = "unanswerable";

/// Lowercases, drops punctuation and the articles a/an/the, and collapses
/// whitespace.
pub fn normalize_text(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn need_refs<S>(refs: &[S]) -> Result<()> {
    if refs.is_empty() {
        Err(Error::Invalid("at least one reference is required".into()))
    } else {
        Ok(())
    }
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, isize> = HashMap::new();
    for w in &g {
        *counts.entry(w).or_default() += 1;
    }
    let mut common = 0usize;
    for w in &p {
        if let Some(c) = counts.get_mut(w) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    // harmonic mean of precision and recall, in a form that stays exact for small counts
    2.0 * common as f64 / (p.len() + g.len()) as f64
}

/// Instance nF1 (×100): best token F1 over references after normalization.
pub fn nf1_instance<S: AsRef<str>>(prediction: &str, references: &[S]) -> Result<f64> {
    need_refs(references)?;
    let p = normalize_text(prediction);
    Ok(references
        .iter()
        .map(|r| 100.0 * token_f1(&p, &normalize_text(r.as_ref())))
        .fold(0.0, f64::max))
}

/// Instance EM (×100) against any reference after normalization.
pub fn em_instance<S: AsRef<str>>(prediction: &str, references: &[S]) -> Result<f64> {
    need_refs(references)?;
    let p = normalize_text(prediction);
    Ok(if references.iter().any(|r| normalize_text(r.as_ref()) == p) { 100.0 } else { 0.0 })
}

fn corpus<S: AsRef<str>>(
    metric: Metric,
    predictions: &[S],
    references: &[Vec<String>],
    f: impl Fn(&str, &[String]) -> Result<f64>,
) -> Result<MetricValue> {
    if predictions.len() != references.len() {
        return Err(Error::Invalid(format!(
            "{metric}: {} predictions vs {} reference lists",
            predictions.len(),
            references.len()
        )));
    }
    let per = predictions
        .iter()
        .zip(references)
        .map(|(p, r)| f(p.as_ref(), r))
        .collect::<Result<Vec<f64>>>()?;
    Ok(MetricValue::new(metric, mean(&per), per.len()))
}

pub fn nf1<S: AsRef<str>>(predictions: &[S], references: &[Vec<String>]) -> Result<MetricValue> {
    corpus(Metric::Nf1, predictions, references, nf1_instance)
}

pub fn em<S: AsRef<str>>(predictions: &[S], references: &[Vec<String>]) -> Result<MetricValue> {
    corpus(Metric::Em, predictions, references, em_instance)
}

fn lf_normal(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Logical-form exact match: whitespace-collapsed, case-insensitive equality.
pub fn lf_em<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], references: &[T]) -> Result<MetricValue> {
    if predictions.len() != references.len() {
        return Err(Error::Invalid("lf_em: length mismatch".into()));
    }
    let per: Vec<f64> = predictions
        .iter()
        .zip(references)
        .map(|(p, g)| if lf_normal(p.as_ref()) == lf_normal(g.as_ref()) { 100.0 } else { 0.0 })
        .collect();
    Ok(MetricValue::new(Metric::LfEm, mean(&per), per.len()))
}

fn is_null(s: &str) -> bool {
    normalize_text(s) == NULL_ANSWER
}

/// Corpus F1 where precision is over non-null predictions and recall over
/// answerable instances. Precision is 0 when nothing is answered.
pub fn corpus_f1_zre<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], golds: &[T]) -> Result<MetricValue> {
    if predictions.len() != golds.len() {
        return Err(Error::Invalid("corpus_f1_zre: length mismatch".into()));
    }
    let (mut tp, mut answered, mut answerable) = (0usize, 0usize, 0usize);
    for (p, g) in predictions.iter().zip(golds) {
        let (p, g) = (p.as_ref(), g.as_ref());
        let (pn, gn) = (is_null(p), is_null(g));
        if !pn {
            answered += 1;
        }
        if !gn {
            answerable += 1;
        }
        if !pn && !gn && normalize_text(p) == normalize_text(g) {
            tp += 1;
        }
    }
    // with tp > 0 both precision and recall are defined and F1 = 2tp / (answered + answerable)
    let value = if tp == 0 {
        0.0
    } else {
        200.0 * tp as f64 / (answered + answerable) as f64
    };
    Ok(MetricValue::new(Metric::Cf1, value, predictions.len()))
}

/// Sum of exactly ten task metrics.
pub fn deca_score(values: &[f64]) -> Result<f64> {
    if values.len() != 10 {
        return Err(Error::Invalid(format!("decaScore needs 10 metrics, got {}", values.len())));
    }
    Ok(values.iter().sum())
}

/// Scores predictions with `metric`. Single-reference metrics use the first
/// reference; dsEM parses both sides as belief states.
pub fn score<S: AsRef<str>>(metric: Metric, predictions: &[S], references: &[Vec<String>]) -> Result<MetricValue> {
    let first = || -> Result<Vec<&str>> {
        references
            .iter()
            .map(|r| {
                r.first()
                    .map(String::as_str)
                    .ok_or_else(|| Error::Invalid("at least one reference is required".into()))
            })
            .collect()
    };
    match metric {
        Metric::Nf1 => nf1(predictions, references),
        Metric::Em => em(predictions, references),
        Metric::Bleu => corpus_bleu(predictions, &first()?),
        Metric::Rouge => rouge_avg(predictions, &first()?),
        Metric::Cf1 => corpus_f1_zre(predictions, &first()?),
        Metric::LfEm => lf_em(predictions, &first()?),
        Metric::DsEm => {
            // an unparseable prediction is an empty state, so it only matches an empty gold
            let p: Vec<BeliefState> = predictions
                .iter()
                .map(|s| BeliefState::parse(s.as_ref()).unwrap_or_default())
                .collect();
            let g = first()?
                .into_iter()
                .map(BeliefState::parse)
                .collect::<Result<Vec<_>>>()?;
            ds_em(&p, &g)
        }
    }
}

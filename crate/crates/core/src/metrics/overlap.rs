//! N-gram overlap metrics over lowercased word tokens.

use std::collections::HashMap;

use super::{mean, Metric, MetricValue};
use crate::data::{tokenize, words};
use crate::error::{Error, Result};

pub(crate) fn lower_tokens(s: &str) -> Vec<String> {
    words(&tokenize(&s.to_lowercase()))
}

fn ngrams(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

fn clipped_overlap(pred: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let p = ngrams(pred, n);
    let r = ngrams(reference, n);
    let hits = p
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (hits, p.values().sum(), r.values().sum())
}

fn check_lengths(op: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Invalid(format!("{op}: {a} predictions vs {b} references")));
    }
    if a == 0 {
        return Err(Error::Invalid(format!("{op}: empty corpus")));
    }
    Ok(())
}

/// Corpus BLEU-4 with clipped counts, brevity penalty and no smoothing.
pub fn corpus_bleu<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], references: &[T]) -> Result<MetricValue> {
    check_lengths("corpus_bleu", predictions.len(), references.len())?;
    let mut hits = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (p, g) in predictions.iter().zip(references) {
        let (p, g) = (lower_tokens(p.as_ref()), lower_tokens(g.as_ref()));
        c += p.len();
        r += g.len();
        for n in 1..=4 {
            let (h, t, _) = clipped_overlap(&p, &g, n);
            hits[n - 1] += h;
            totals[n - 1] += t;
        }
    }
    let value = if hits.contains(&0) {
        0.0
    } else {
        let log_p: f64 = (0..4)
            .map(|i| (hits[i] as f64 / totals[i] as f64).ln())
            .sum::<f64>()
            / 4.0;
        let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
        100.0 * bp * log_p.exp()
    };
    Ok(MetricValue::new(Metric::Bleu, value, predictions.len()))
}

fn f1(hits: usize, pred: usize, reference: usize) -> f64 {
    match (pred, reference) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ if hits == 0 => 0.0,
        _ => {
            let p = hits as f64 / pred as f64;
            let r = hits as f64 / reference as f64;
            2.0 * p * r / (p + r)
        }
    }
}

pub(crate) fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// ROUGE-1, ROUGE-2 and ROUGE-L F1 (×100) for one pair. When both sides have
/// no n-grams of some order the pair counts as a full match for it.
pub fn rouge_scores(prediction: &str, reference: &str) -> [f64; 3] {
    let (p, g) = (lower_tokens(prediction), lower_tokens(reference));
    let r1 = clipped_overlap(&p, &g, 1);
    let r2 = clipped_overlap(&p, &g, 2);
    [
        100.0 * f1(r1.0, r1.1, r1.2),
        100.0 * f1(r2.0, r2.1, r2.2),
        100.0 * f1(lcs_len(&p, &g), p.len(), g.len()),
    ]
}

/// Mean over instances of the average of ROUGE-1, ROUGE-2 and ROUGE-L F1.
pub fn rouge_avg<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], references: &[T]) -> Result<MetricValue> {
    check_lengths("rouge_avg", predictions.len(), references.len())?;
    let per: Vec<f64> = predictions
        .iter()
        .zip(references)
        .map(|(p, g)| rouge_scores(p.as_ref(), g.as_ref()).iter().sum::<f64>() / 3.0)
        .collect();
    Ok(MetricValue::new(Metric::Rouge, mean(&per), per.len()))
}

use std::borrow::Borrow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::example::EncodedExample;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Examples of a single task packed under a token budget. Id matrices use
/// generative-vocabulary ids (`<unk>` for out-of-vocabulary words) padded
/// with `<eos>`; `lengths` give the true extents.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub task: String,
    /// Positions of the members in the slice given to [`make_batches`].
    pub indices: Vec<usize>,
    pub context_ids: Vec<Vec<usize>>,
    pub question_ids: Vec<Vec<usize>>,
    pub answer_ids: Vec<Vec<usize>>,
    pub context_lens: Vec<usize>,
    pub question_lens: Vec<usize>,
    pub answer_lens: Vec<usize>,
    pub cost: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn padded(rows: Vec<Vec<usize>>) -> (Vec<Vec<usize>>, Vec<usize>) {
    let lens: Vec<usize> = rows.iter().map(Vec::len).collect();
    let width = lens.iter().copied().max().unwrap_or(0);
    let rows = rows
        .into_iter()
        .map(|mut r| {
            r.resize(width, super::vocab::EOS);
            r
        })
        .collect();
    (rows, lens)
}

fn assemble<E: Borrow<EncodedExample>>(examples: &[E], indices: Vec<usize>, cost: usize, vocab: &Vocabulary) -> Batch {
    let ids = |f: fn(&EncodedExample) -> &Vec<String>| -> Vec<Vec<usize>> {
        indices
            .iter()
            .map(|&i| f(examples[i].borrow()).iter().map(|w| vocab.id_or_unk(w)).collect())
            .collect()
    };
    let (context_ids, context_lens) = padded(ids(|e| &e.context));
    let (question_ids, question_lens) = padded(ids(|e| &e.question));
    let (answer_ids, answer_lens) = padded(ids(|e| &e.answer));
    Batch {
        task: examples[indices[0]].borrow().task.clone(),
        indices,
        context_ids,
        question_ids,
        answer_ids,
        context_lens,
        question_lens,
        answer_lens,
        cost,
    }
}

/// Greedy packing in the given order: a batch is closed as soon as the next
/// example would push its cost over `budget`.
pub fn make_batches<E: Borrow<EncodedExample>>(examples: &[E], budget: usize, vocab: &Vocabulary) -> Result<Vec<Batch>> {
    if let Some(first) = examples.first().map(Borrow::borrow) {
        if let Some(other) = examples.iter().map(Borrow::borrow).find(|e| e.task != first.task) {
            return Err(Error::Invalid(format!(
                "batches must be task-pure, found `{}` and `{}`",
                first.task, other.task
            )));
        }
    }
    let mut batches = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut cost = 0;
    for (i, ex) in examples.iter().enumerate() {
        let c = ex.borrow().cost();
        if c > budget {
            return Err(Error::OverBudget { index: i, cost: c, budget });
        }
        if cost + c > budget {
            batches.push(assemble(examples, std::mem::take(&mut current), cost, vocab));
            cost = 0;
        }
        current.push(i);
        cost += c;
    }
    if !current.is_empty() {
        batches.push(assemble(examples, current, cost, vocab));
    }
    Ok(batches)
}

/// Index order for one pass over `n` examples: a seeded shuffle.
pub fn shuffled_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::example::Example;

    fn encoded(l: usize, m: usize, n: usize, vocab: &Vocabulary) -> EncodedExample {
        let s = |k: usize| vec!["w"; k].join(" ");
        EncodedExample::new(&Example::new("t", s(l), s(m), s(n)).unwrap(), vocab).unwrap()
    }

    #[test]
    fn cost_rule() {
        let v = Vocabulary::build(["w"], 4).unwrap();
        assert_eq!(encoded(50, 10, 8, &v).cost(), 100);
    }

    #[test]
    fn greedy_packing() {
        let v = Vocabulary::build(["w"], 4).unwrap();
        let exs: Vec<_> = (0..3).map(|_| encoded(20, 15, 1, &v)).collect();
        let batches = make_batches(&exs, 100, &v).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Batch::len).collect();
        assert_eq!(sizes, vec![2, 1]);
        assert_eq!(batches[0].cost, 80);
        assert_eq!(batches[0].context_lens, vec![20, 20]);
        assert!(make_batches::<EncodedExample>(&[], 100, &v).unwrap().is_empty());
    }

    #[test]
    fn over_budget_names_example() {
        let v = Vocabulary::build(["w"], 4).unwrap();
        let exs = vec![encoded(1, 1, 1, &v), encoded(90, 10, 1, &v)];
        match make_batches(&exs, 100, &v).unwrap_err() {
            Error::OverBudget { index, cost, .. } => assert_eq!((index, cost), (1, 105)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mixed_tasks_rejected() {
        let v = Vocabulary::build(["w"], 4).unwrap();
        let a = encoded(1, 1, 1, &v);
        let mut b = a.clone();
        b.task = "other".into();
        assert!(make_batches(&[a, b], 100, &v).is_err());
    }

    #[test]
    fn padding_uses_eos() {
        let v = Vocabulary::build(["w"], 4).unwrap();
        let exs = vec![encoded(1, 1, 1, &v), encoded(3, 1, 1, &v)];
        let b = &make_batches(&exs, 100, &v).unwrap()[0];
        assert_eq!(b.context_ids[0], vec![3, 0, 0]);
    }
}

//! Random inputs for tokenizer and batching checks.

use mqan::data::{EncodedExample, Example, Vocabulary};
use rand::Rng;

const PIECES: [&str; 24] = [
    "a", "Z", "7", "é", "中", "\u{0301}", "ß", "word", ".", ",", "'", "\"", "(", ")", "-", "$", "😀", " ", " ", "  ", "\t",
    "\n", "\r\n", "\u{00a0}",
];

/// Strings built from letters, digits, punctuation, emoji, combining marks
/// and every kind of whitespace run, including leading and trailing ones.
pub fn random_string(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(0..40);
    (0..n).map(|_| PIECES[rng.gen_range(0..PIECES.len())]).collect()
}

fn words(rng: &mut impl Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|i| format!("w{}", (i * 7 + rng.gen_range(0..50)) % 97)).collect::<Vec<_>>().join(" ")
}

/// Examples of one task with lengths spread from tiny to near the budget.
pub fn random_examples(rng: &mut impl Rng, n: usize, vocab: &Vocabulary) -> Vec<EncodedExample> {
    (0..n)
        .map(|_| {
            let scale = [10, 100, 1500][rng.gen_range(0..3)];
            let ex = Example::new("task", words(rng, 1, scale), words(rng, 1, 30), words(rng, 1, scale / 10 + 1)).unwrap();
            EncodedExample::new(&ex, vocab).unwrap()
        })
        .collect()
}

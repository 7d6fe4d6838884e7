//! Tiny models and random examples for decoder checks.

use mqan::data::{EncodedExample, Example, Vocabulary};
use mqan::decoder::OutputDistribution;
use mqan::model::{ModelDims, Mqan};
use mqan::tensor::{Graph, Mode};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const POOL: [&str; 8] = ["a", "b", "c", "d", "e", "f", "zz", "qq"];

pub fn dims(heads: usize, layers: usize) -> ModelDims {
    ModelDims { char_dim: 5, word_dim: 0, buckets: 32, d: 4, f: 3, heads, self_layers: 1, decoder_layers: layers, vocab: 9 }
}

pub fn model(seed: u64, heads: usize, layers: usize) -> Mqan {
    let vocab = Vocabulary::build("a b c d x y".split(' '), 9).unwrap();
    Mqan::new(dims(heads, layers), vocab, None, seed).unwrap()
}

pub fn text(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect::<Vec<_>>().join(" ")
}

pub fn example(m: &Mqan, rng: &mut ChaCha8Rng) -> EncodedExample {
    let ex = Example::new("t", text(rng, 1, 5), text(rng, 1, 4), text(rng, 1, 5)).unwrap();
    m.encode_example(&ex).unwrap()
}

/// Teacher-forced step distributions when the decoder is fed `inputs`.
pub fn steps(m: &Mqan, ex: &EncodedExample, inputs: &[String]) -> Vec<OutputDistribution> {
    let mut g = Graph::new(&m.params, Mode::EVAL, 0);
    let enc = m.encode(&mut g, ex).unwrap();
    let outs = m.decoder.teacher_forced_steps(&mut g, &m.embedder, enc, inputs).unwrap();
    outs.iter().map(|o| m.decoder.distribution(&g, o, &ex.ext).unwrap()).collect()
}

/// Replaces the gold inputs from position `t` on and reports the first step
/// at or before `t` whose distribution changed in any bit.
pub fn causal_violation(m: &Mqan, rng: &mut ChaCha8Rng) -> Option<usize> {
    let ex = example(m, rng);
    let t = rng.gen_range(0..=ex.answer.len());
    let base = steps(m, &ex, &ex.answer);
    let mut changed = ex.answer.clone();
    for w in changed.iter_mut().skip(t) {
        *w = POOL[rng.gen_range(0..POOL.len())].to_string();
    }
    let other = steps(m, &ex, &changed);
    (0..=t).find(|&s| {
        let a = base[s].probs.iter().map(|p| p.to_bits());
        let b = other[s].probs.iter().map(|p| p.to_bits());
        !a.eq(b)
    })
}

/// Worst normalization error over `n` random decoder states, and whether
/// every switch and probability stayed in range.
pub fn mixture_fuzz(n: usize, seed: u64) -> (f64, bool) {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models: Vec<Mqan> = (0..4).map(|s| model(s, 1 + s as usize % 2, 1 + s as usize / 2)).collect();
    let (mut worst, mut in_range, mut checked) = (0.0f64, true, 0);
    while checked < n {
        let m = &models[checked % 4];
        let ex = example(m, &mut rng);
        for d in steps(m, &ex, &ex.answer) {
            worst = worst.max((d.probs.iter().sum::<f64>() - 1.0).abs());
            in_range &= (0.0..=1.0).contains(&d.gamma) && (0.0..=1.0).contains(&d.lambda);
            in_range &= d.probs.iter().all(|p| (0.0..=1.0 + 1e-12).contains(p));
            checked += 1;
        }
    }
    (worst, in_range)
}

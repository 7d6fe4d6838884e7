mod common;

use common::cases::{causal_violation, example, mixture_fuzz, model, steps, POOL};
use common::nets;
use mqan::data::Vocabulary;
use mqan::decoder::mix;
use mqan::tensor::{Graph, Mode};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn teacher_forced_distributions_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..12 {
        let (heads, layers) = [(1, 1), (2, 1), (1, 2), (2, 2)][case % 4];
        let m = model(case as u64, heads, layers);
        let ex = example(&m, &mut rng);
        let dists = steps(&m, &ex, &ex.answer);

        let mut g = Graph::new(&m.params, Mode::EVAL, 0);
        let enc = m.encode(&mut g, &ex).unwrap();
        let c_fin = g.value(enc.c_fin).to_rows();
        let q_fin = g.value(enc.q_fin).to_rows();
        let mut inputs = vec![nets::param(&m.params, "dec.init")[0].clone()];
        inputs.extend(nets::embed(&m.params, &ex.answer, m.dims.buckets));
        let oracle = nets::decoder(&m.params, &inputs, &c_fin, &q_fin, heads, layers);
        assert_eq!(oracle.len(), dists.len());

        for (t, (o, d)) in oracle.iter().zip(&dists).enumerate() {
            assert!((o.gamma - d.gamma).abs() <= 1e-12 && (o.lambda - d.lambda).abs() <= 1e-12, "case {case} step {t}");
            let by_word = nets::mixture_by_word(o, m.vocab.words(), &ex.context, &ex.question);
            for e in 0..ex.ext.len() {
                let want = by_word.get(ex.ext.word(e)).copied().unwrap_or(0.0);
                assert!((d.probs[e] - want).abs() <= 1e-12, "case {case} step {t} word {}", ex.ext.word(e));
            }
        }
    }
}

#[test]
fn causal_prefix_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = model(7, 2, 2);
    for case in 0..200 {
        assert_eq!(causal_violation(&m, &mut rng), None, "case {case}");
    }
}

#[test]
fn greedy_agrees_with_teacher_forcing_on_its_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let m = model(seed, 1 + seed as usize % 2, 1);
        let ex = example(&m, &mut rng);
        let out = m.greedy_decode(&ex, 6).unwrap();
        assert!(out.ended || out.words.len() == 6);
        let dists = steps(&m, &ex, &out.words);
        for (t, id) in out.ids.iter().enumerate() {
            assert_eq!(dists[t].argmax(), *id);
            assert!((dists[t].gamma - out.switches[t].0).abs() <= 1e-12);
        }
        if out.ended {
            assert_eq!(dists[out.ids.len()].argmax(), ex.ext.eos());
        }
    }
}

#[test]
fn forced_switches_select_one_source() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut m = model(2, 1, 1);
    let ex = example(&m, &mut rng);
    m.decoder.force_gamma = Some(0.0);
    m.decoder.force_lambda = Some(1.0);
    for d in steps(&m, &ex, &ex.answer) {
        let on_context: f64 = (0..ex.ext.len())
            .filter(|&e| ex.context.iter().any(|w| w == ex.ext.word(e)))
            .map(|e| d.probs[e])
            .sum();
        assert!((on_context - 1.0).abs() < 1e-12);
    }
    m.decoder.force_gamma = Some(1.0);
    for d in steps(&m, &ex, &ex.answer) {
        let off_vocab: f64 = (0..ex.ext.len()).filter(|&e| ex.ext.vocab_id(e).is_none()).map(|e| d.probs[e]).sum();
        assert_eq!(off_vocab, 0.0);
    }
}

#[test]
fn decoder_states_give_normalized_mixtures() {
    let (worst, in_range) = mixture_fuzz(1000, 5);
    assert!(worst <= 1e-9, "{worst}");
    assert!(in_range);
}

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

proptest! {
    #[test]
    fn mix_is_a_distribution(
        pv in prop::collection::vec(0.01f64..1.0, 5),
        ac in prop::collection::vec(0.01f64..1.0, 1..6),
        aq in prop::collection::vec(0.01f64..1.0, 1..5),
        ctx in prop::collection::vec(0usize..8, 6),
        qst in prop::collection::vec(0usize..8, 5),
        gamma in 0.0f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let vocab = Vocabulary::from(["<eos>", "<init>", "<unk>", "a", "b"].iter().map(|s| s.to_string()).collect::<Vec<_>>());
        let context: Vec<&str> = ctx[..ac.len()].iter().map(|&i| POOL[i]).collect();
        let question: Vec<&str> = qst[..aq.len()].iter().map(|&i| POOL[i]).collect();
        let ext = mqan::data::ExtendedVocab::new(&context, &question, &vocab);
        let d = mix(&normalized(pv), &normalized(ac), &normalized(aq), gamma, lambda, &ext).unwrap();
        prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(d.probs.iter().all(|p| *p >= 0.0));
    }
}

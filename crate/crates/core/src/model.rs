//! The full network: embedder, encoder and decoder over one parameter set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{join_words, Embedder, EncodedExample, Example, Pretrained, Vocabulary};
use crate::decoder::{nll_loss, Decoded, DecoderDims, DecoderParams, DEFAULT_MAX_LEN};
use crate::encoder::{EncodedPair, EncoderDims, EncoderParams};
use crate::error::{Error, Result};
use crate::tensor::{Grads, Graph, Mode, NodeId, ParamSet};

/// Architecture hyperparameters. Fields left out of a config file take
/// their full-scale values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    /// Width of the trained character-trigram embedding.
    pub char_dim: usize,
    /// Width of frozen pretrained word vectors (0 when none are used).
    pub word_dim: usize,
    /// Hash buckets for character trigrams.
    pub buckets: usize,
    pub d: usize,
    pub f: usize,
    pub heads: usize,
    pub self_layers: usize,
    pub decoder_layers: usize,
    pub vocab: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims::full_size()
    }
}

impl ModelDims {
    pub fn d_emb(&self) -> usize {
        self.char_dim + self.word_dim
    }

    /// Full-scale sizes: 400-wide embeddings, d = 200, f = 150, 3 heads, two
    /// layers on each side and 50000 generative words.
    pub fn full_size() -> Self {
        ModelDims {
            char_dim: 100,
            word_dim: 300,
            buckets: 100_000,
            d: 200,
            f: 150,
            heads: 3,
            self_layers: 2,
            decoder_layers: 2,
            vocab: 50_000,
        }
    }

    /// Desk-scale sizes used by the synthetic experiments.
    pub fn toy() -> Self {
        ModelDims {
            char_dim: 32,
            word_dim: 0,
            buckets: 1024,
            d: 32,
            f: 32,
            heads: 1,
            self_layers: 1,
            decoder_layers: 1,
            vocab: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mqan {
    pub dims: ModelDims,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    pub embedder: Embedder,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl Mqan {
    pub fn new(dims: ModelDims, vocab: Vocabulary, pretrained: Option<Pretrained>, seed: u64) -> Result<Self> {
        let got = pretrained.as_ref().map_or(0, Pretrained::dim);
        if got != dims.word_dim {
            return Err(Error::Config {
                field: "word_dim".into(),
                message: format!("configured {} but pretrained vectors have width {got}", dims.word_dim),
            });
        }
        if vocab.len() > dims.vocab {
            return Err(Error::Config {
                field: "vocab".into(),
                message: format!("vocabulary of {} words exceeds v = {}", vocab.len(), dims.vocab),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let embedder = Embedder::new(&mut params, dims.buckets, dims.char_dim, pretrained, &mut rng)?;
        let encoder = EncoderParams::new(
            &mut params,
            EncoderDims {
                d_emb: dims.d_emb(),
                d: dims.d,
                f: dims.f,
                heads: dims.heads,
                layers: dims.self_layers,
            },
            &mut rng,
        )?;
        let decoder = DecoderParams::new(
            &mut params,
            DecoderDims {
                d_emb: dims.d_emb(),
                d: dims.d,
                f: dims.f,
                heads: dims.heads,
                layers: dims.decoder_layers,
                vocab: vocab.len(),
            },
            &mut rng,
        )?;
        Ok(Mqan { dims, vocab, params, embedder, encoder, decoder })
    }

    pub fn encode_example(&self, ex: &Example) -> Result<EncodedExample> {
        EncodedExample::new(ex, &self.vocab)
    }

    pub fn encode(&self, g: &mut Graph, ex: &EncodedExample) -> Result<EncodedPair> {
        let c = self.embedder.forward(g, &ex.context)?;
        let q = self.embedder.forward(g, &ex.question)?;
        self.encoder.encode(g, c, q)
    }

    /// Teacher-forced `−Σ_t log p(a_t)` for one example.
    pub fn loss(&self, g: &mut Graph, ex: &EncodedExample) -> Result<NodeId> {
        let enc = self.encode(g, ex)?;
        let probs = self
            .decoder
            .teacher_forced(g, &self.embedder, enc, &ex.ext, &ex.answer, &ex.target)?;
        nll_loss(g, &probs)
    }

    /// Loss value and parameter gradients for one example.
    pub fn example_grads(&self, ex: &EncodedExample, mode: Mode, seed: u64) -> Result<(f64, Grads)> {
        let mut g = Graph::new(&self.params, mode, seed);
        let loss = self.loss(&mut g, ex)?;
        let value = g.value(loss).item();
        let mut grads = Grads::zeros_like(&self.params);
        g.backward(loss, &mut grads)?;
        Ok((value, grads))
    }

    /// Mean loss and mean gradient over `examples`. Example `i` uses dropout
    /// seed `seed + i`; per-example gradients are summed in index order, so
    /// the result does not depend on `threads`.
    pub fn batch_grads(&self, examples: &[&EncodedExample], mode: Mode, seed: u64, threads: usize) -> Result<(f64, Grads)> {
        if examples.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let run = |i: usize| self.example_grads(examples[i], mode, seed.wrapping_add(i as u64));
        let results: Vec<Result<(f64, Grads)>> = if threads <= 1 || examples.len() == 1 {
            (0..examples.len()).map(run).collect()
        } else {
            let chunk = examples.len().div_ceil(threads);
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..examples.len())
                    .step_by(chunk)
                    .map(|start| {
                        let run = &run;
                        s.spawn(move || (start..(start + chunk).min(examples.len())).map(run).collect::<Vec<_>>())
                    })
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("gradient worker panicked"))
                    .collect()
            })
        };
        let mut total = Grads::zeros_like(&self.params);
        let mut loss = 0.0;
        for r in results {
            let (l, g) = r?;
            loss += l;
            total.add_assign(&g);
        }
        let n = examples.len() as f64;
        total.scale(1.0 / n);
        Ok((loss / n, total))
    }

    pub fn greedy_decode(&self, ex: &EncodedExample, max_len: usize) -> Result<Decoded> {
        let mut g = Graph::new(&self.params, Mode::EVAL, 0);
        let enc = self.encode(&mut g, ex)?;
        self.decoder.greedy_decode(&mut g, &self.embedder, enc, &ex.ext, max_len)
    }

    /// Decodes an answer for raw context and question strings.
    pub fn answer(&self, context: &str, question: &str, max_len: usize) -> Result<(String, Decoded)> {
        let ex = Example::new("decode", context, question, "<eos>")?;
        if ex.context_words().is_empty() || ex.question_words().is_empty() {
            return Err(Error::Invalid("context and question must be nonempty".into()));
        }
        let enc = self.encode_example(&ex)?;
        let out = self.greedy_decode(&enc, max_len)?;
        Ok((join_words(&out.words), out))
    }

    pub fn default_max_len() -> usize {
        DEFAULT_MAX_LEN
    }
}

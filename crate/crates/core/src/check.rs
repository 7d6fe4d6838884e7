//! Central-difference checks of the network's analytic gradients, run
//! separately on the encoder, the decoder and the full model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Embedder, EncodedExample, Example, Vocabulary};
use crate::decoder::{nll_loss, DecoderDims, DecoderParams};
use crate::encoder::{EncodedPair, EncoderDims, EncoderParams};
use crate::error::Result;
use crate::model::{ModelDims, Mqan};
use crate::tensor::gradcheck::{grad_check_with, GradCheckReport};
use crate::tensor::{Grads, Graph, NodeId, ParamSet, Tensor};

/// Finite-difference step.
pub const STEP: f64 = 1e-6;
/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-4;

/// Sizes small enough that checking every parameter entry is cheap.
pub fn check_dims() -> ModelDims {
    ModelDims {
        char_dim: 4,
        word_dim: 0,
        buckets: 16,
        d: 4,
        f: 3,
        heads: 1,
        self_layers: 1,
        decoder_layers: 1,
        vocab: 8,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub block: &'static str,
    pub report: GradCheckReport,
}

impl BlockCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.report.max_rel_error()
    }
}

/// How the analytic gradient is obtained. `Corrupted` scales every gradient
/// by 1.01 and exists to show that the check notices a wrong backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backward {
    Exact,
    Corrupted,
}

fn backward(kind: Backward) -> impl Fn(&Graph, NodeId, &mut Grads) -> Result<()> {
    move |g, out, grads| {
        g.backward(out, grads)?;
        if kind == Backward::Corrupted {
            grads.scale(1.01);
        }
        Ok(())
    }
}

/// The example every block is checked on: two words each of context,
/// question and answer. The answer mixes a context word with one that only
/// the vocabulary can produce.
pub fn check_example(vocab: &Vocabulary) -> Result<EncodedExample> {
    EncodedExample::new(&Example::new("check", "a b", "x a", "b y")?, vocab)
}

fn check_vocab(dims: &ModelDims) -> Result<Vocabulary> {
    Vocabulary::build("a b x y z".split(' '), dims.vocab)
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn encoder_dims(d: &ModelDims) -> EncoderDims {
    EncoderDims { d_emb: d.d_emb(), d: d.d, f: d.f, heads: d.heads, layers: d.self_layers }
}

/// Encoder alone on random embeddings; the loss is a fixed random linear
/// read-out of both final encodings.
pub fn check_encoder(dims: ModelDims, seed: u64, kind: Backward) -> Result<BlockCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let enc = EncoderParams::new(&mut params, encoder_dims(&dims), &mut rng)?;
    let (l, m) = (2, 2);
    let c = random(l, dims.d_emb(), &mut rng);
    let q = random(m, dims.d_emb(), &mut rng);
    let rc = random(l, dims.d, &mut rng);
    let rq = random(m, dims.d, &mut rng);
    let loss = |g: &mut Graph| -> Result<NodeId> {
        let (cn, qn) = (g.constant(c.clone()), g.constant(q.clone()));
        let out = enc.encode(g, cn, qn)?;
        let (rcn, rqn) = (g.constant(rc.clone()), g.constant(rq.clone()));
        let a = g.mul(out.c_fin, rcn)?;
        let b = g.mul(out.q_fin, rqn)?;
        let (a, b) = (g.sum(a)?, g.sum(b)?);
        g.add(a, b)
    };
    let report = grad_check_with(&params, loss, STEP, backward(kind))?;
    Ok(BlockCheck { block: "encoder", report })
}

/// Embedder and decoder on random final encodings, with the teacher-forced
/// negative log-likelihood as loss.
pub fn check_decoder(dims: ModelDims, seed: u64, kind: Backward) -> Result<BlockCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = check_vocab(&dims)?;
    let ex = check_example(&vocab)?;
    let mut params = ParamSet::new();
    let embedder = Embedder::new(&mut params, dims.buckets, dims.char_dim, None, &mut rng)?;
    let dec_dims = DecoderDims {
        d_emb: dims.d_emb(),
        d: dims.d,
        f: dims.f,
        heads: dims.heads,
        layers: dims.decoder_layers,
        vocab: vocab.len(),
    };
    let dec = DecoderParams::new(&mut params, dec_dims, &mut rng)?;
    let c_fin = random(ex.context.len(), dims.d, &mut rng);
    let q_fin = random(ex.question.len(), dims.d, &mut rng);
    let loss = |g: &mut Graph| -> Result<NodeId> {
        let enc = EncodedPair { c_fin: g.constant(c_fin.clone()), q_fin: g.constant(q_fin.clone()) };
        let probs = dec.teacher_forced(g, &embedder, enc, &ex.ext, &ex.answer, &ex.target)?;
        nll_loss(g, &probs)
    };
    let report = grad_check_with(&params, loss, STEP, backward(kind))?;
    Ok(BlockCheck { block: "decoder", report })
}

pub fn check_full(dims: ModelDims, seed: u64, kind: Backward) -> Result<BlockCheck> {
    let model = Mqan::new(dims, check_vocab(&dims)?, None, seed)?;
    let ex = check_example(&model.vocab)?;
    let report = grad_check_with(&model.params, |g| model.loss(g, &ex), STEP, backward(kind))?;
    Ok(BlockCheck { block: "full", report })
}

/// All three blocks, in order.
pub fn check_all(dims: ModelDims, seed: u64, kind: Backward) -> Result<Vec<BlockCheck>> {
    Ok(vec![
        check_encoder(dims, seed, kind)?,
        check_decoder(dims, seed, kind)?,
        check_full(dims, seed, kind)?,
    ])
}

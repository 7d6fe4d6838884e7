//! Multi-pointer-generator decoder.
//!
//! A causal self-attention pre-pass over the (teacher-forced) answer feeds an
//! attentional LSTM. At each step the output distribution over the example's
//! extended vocabulary mixes a generative softmax, a pointer into the context
//! and a pointer into the question through the switches `γ` and `λ`:
//! `p = γ·p_v + (1−γ)·(λ·p_c + (1−λ)·p_q)`.

use rand::Rng;

use crate::data::vocab::ExtendedVocab;
use crate::data::Embedder;
use crate::encoder::EncodedPair;
use crate::error::{Error, Result};
use crate::tensor::nn::{LstmParams, MultiHead, ResidualFfn};
use crate::tensor::{Axis, Graph, NodeId, ParamId, ParamSet, Tensor};

pub const DEFAULT_MAX_LEN: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderDims {
    pub d_emb: usize,
    pub d: usize,
    pub f: usize,
    pub heads: usize,
    pub layers: usize,
    pub vocab: usize,
}

/// `PE[t, k] = sin(t / 10000^(k/d))` for even `k` and
/// `cos(t / 10000^((k−1)/d))` for odd `k`.
pub fn positional_encoding(n: usize, d: usize) -> Tensor {
    Tensor::from_fn(n, d, |t, k| {
        let even = k - k % 2;
        let angle = t as f64 / 10000f64.powf(even as f64 / d as f64);
        if k % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub self_attn: MultiHead,
    pub context_attn: MultiHead,
    pub ffn: ResidualFfn,
}

impl DecoderLayer {
    fn new(params: &mut ParamSet, prefix: &str, d: usize, f: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(DecoderLayer {
            self_attn: MultiHead::new(params, &format!("{prefix}.self_attn"), d, heads, rng)?,
            context_attn: MultiHead::new(params, &format!("{prefix}.ctx_attn"), d, heads, rng)?,
            ffn: ResidualFfn::new(params, &format!("{prefix}.ffn"), d, f, rng)?,
        })
    }

    fn forward(&self, g: &mut Graph, x: NodeId, c_fin: NodeId) -> Result<NodeId> {
        let mha = self.self_attn.forward(g, x, x, x, true)?;
        let q = g.add(mha, x)?;
        let ac = self.context_attn.forward(g, q, c_fin, c_fin, false)?;
        let s = g.add(ac, q)?;
        self.ffn.forward(g, s)
    }
}

/// Recurrent state carried between steps: `(h, cell, c̃)`, each `1 × d`.
#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub h: NodeId,
    pub cell: NodeId,
    pub c_tilde: NodeId,
}

/// Graph nodes produced by one decoding step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    /// `1 × v` generative distribution.
    pub p_vocab: NodeId,
    /// `1 × l` context attention.
    pub alpha_c: NodeId,
    /// `1 × m` question attention.
    pub alpha_q: NodeId,
    /// `1 × 1` switches.
    pub gamma: NodeId,
    pub lambda: NodeId,
}

/// A step's mixture over the extended vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDistribution {
    pub probs: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
}

impl OutputDistribution {
    /// Highest-probability extended id; ties go to the lowest id.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Mixes the three source distributions into the extended vocabulary.
/// Words absent from a source receive nothing from it.
pub fn mix(p_vocab: &[f64], alpha_c: &[f64], alpha_q: &[f64], gamma: f64, lambda: f64, ext: &ExtendedVocab) -> Result<OutputDistribution> {
    if p_vocab.len() != ext.vocab_to_ext().len()
        || alpha_c.len() != ext.context_ids().len()
        || alpha_q.len() != ext.question_ids().len()
    {
        return Err(Error::shape(
            "mix",
            format!(
                "p_v {} / α_C {} / α_Q {} vs vocab {} / l {} / m {}",
                p_vocab.len(),
                alpha_c.len(),
                alpha_q.len(),
                ext.vocab_to_ext().len(),
                ext.context_ids().len(),
                ext.question_ids().len()
            ),
        ));
    }
    let mut probs = vec![0.0; ext.len()];
    for (&e, &p) in ext.vocab_to_ext().iter().zip(p_vocab) {
        probs[e] += gamma * p;
    }
    let wc = (1.0 - gamma) * lambda;
    for (&e, &a) in ext.context_ids().iter().zip(alpha_c) {
        probs[e] += wc * a;
    }
    let wq = (1.0 - gamma) * (1.0 - lambda);
    for (&e, &a) in ext.question_ids().iter().zip(alpha_q) {
        probs[e] += wq * a;
    }
    Ok(OutputDistribution { probs, gamma, lambda })
}

#[derive(Debug, Clone)]
pub struct DecoderParams {
    pub dims: DecoderDims,
    /// Learned embedding of the initialization token, `1 × d_emb`.
    pub init: ParamId,
    /// Answer projection, `d_emb × d`.
    pub w2_proj: ParamId,
    pub layers: Vec<DecoderLayer>,
    /// Input `[A_self; c̃]`, width `2d`.
    pub lstm: LstmParams,
    /// Context and question attention scores, `d × d`.
    pub w2_att: ParamId,
    pub w3: ParamId,
    /// `2d × d` combiners for `[summary; h]`.
    pub w4: ParamId,
    pub w5: ParamId,
    /// `d × v`
    pub w_v: ParamId,
    /// `3d × 1` switch weights.
    pub w_pv: ParamId,
    pub w_cq: ParamId,
    /// Fixed switch values for ablations and tests.
    pub force_gamma: Option<f64>,
    pub force_lambda: Option<f64>,
}

impl DecoderParams {
    pub fn new(params: &mut ParamSet, dims: DecoderDims, rng: &mut impl Rng) -> Result<Self> {
        let DecoderDims { d_emb, d, f, heads, layers, vocab } = dims;
        if layers == 0 {
            return Err(Error::Config {
                field: "decoder_layers".into(),
                message: "at least one decoder layer is required".into(),
            });
        }
        if vocab < 1 {
            return Err(Error::Config {
                field: "vocab".into(),
                message: "vocabulary must not be empty".into(),
            });
        }
        let layers = (0..layers)
            .map(|i| DecoderLayer::new(params, &format!("dec.layer.{i}"), d, f, heads, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecoderParams {
            dims,
            init: params.add_uniform("dec.init", 1, d_emb, rng)?,
            w2_proj: params.add_uniform("dec.w2_proj", d_emb, d, rng)?,
            layers,
            lstm: LstmParams::new(params, "dec.lstm", 2 * d, d, rng)?,
            w2_att: params.add_uniform("dec.w2_att", d, d, rng)?,
            w3: params.add_uniform("dec.w3", d, d, rng)?,
            w4: params.add_uniform("dec.w4", 2 * d, d, rng)?,
            w5: params.add_uniform("dec.w5", 2 * d, d, rng)?,
            w_v: params.add_uniform("dec.w_v", d, vocab, rng)?,
            w_pv: params.add_uniform("dec.w_pv", 3 * d, 1, rng)?,
            w_cq: params.add_uniform("dec.w_cq", 3 * d, 1, rng)?,
            force_gamma: None,
            force_lambda: None,
        })
    }

    /// `A·W₂ᵖʳᵒʲ + PE`.
    pub fn embed_answer(&self, g: &mut Graph, a: NodeId) -> Result<NodeId> {
        let w = g.param(self.w2_proj);
        let proj = g.matmul(a, w)?;
        let (n, d) = g.shape(proj);
        let pe = g.constant(positional_encoding(n, d));
        g.add(proj, pe)
    }

    /// Causal self-attention and context attention stack over `A_ppr`.
    pub fn self_attention(&self, g: &mut Graph, a_ppr: NodeId, c_fin: NodeId) -> Result<NodeId> {
        self.layers.iter().try_fold(a_ppr, |x, layer| layer.forward(g, x, c_fin))
    }

    /// Embedded decoder inputs: the initialization token followed by `words`.
    pub fn input_embeddings<S: AsRef<str>>(&self, g: &mut Graph, embedder: &Embedder, words: &[S]) -> Result<NodeId> {
        let init = g.param(self.init);
        if words.is_empty() {
            return Ok(init);
        }
        let rest = embedder.forward(g, words)?;
        g.concat_rows(&[init, rest])
    }

    pub fn initial_state(&self, g: &mut Graph) -> DecoderState {
        let d = self.dims.d;
        DecoderState {
            h: g.constant(Tensor::zeros(1, d)),
            cell: g.constant(Tensor::zeros(1, d)),
            c_tilde: g.constant(Tensor::zeros(1, d)),
        }
    }

    /// One step given the previous token's `A_self` row (`1 × d`).
    pub fn decode_step(&self, g: &mut Graph, prev: NodeId, state: DecoderState, enc: EncodedPair) -> Result<(StepOutput, DecoderState)> {
        for (name, x) in [("context", enc.c_fin), ("question", enc.q_fin)] {
            if g.shape(x).0 == 0 {
                return Err(Error::Invalid(format!("empty {name}")));
            }
        }
        let x = g.concat_cols(&[prev, state.c_tilde])?;
        let x = g.dropout(x)?;
        let (h, cell) = self.lstm.step(g, x, (state.h, state.cell))?;

        let attend = |g: &mut Graph, fin: NodeId, w: ParamId, comb: ParamId| -> Result<(NodeId, NodeId)> {
            let w = g.param(w);
            let key = g.matmul_nt(h, w)?; // (W h)ᵀ = hᵀWᵀ
            let scores = g.matmul_nt(key, fin)?;
            let alpha = g.softmax(scores, Axis::Rows, None)?;
            let summary = g.matmul(alpha, fin)?;
            let joined = g.concat_cols(&[summary, h])?;
            let comb = g.param(comb);
            let mixed = g.matmul(joined, comb)?;
            Ok((alpha, g.tanh(mixed)?))
        };
        let (alpha_c, c_tilde) = attend(g, enc.c_fin, self.w2_att, self.w4)?;
        let (alpha_q, q_tilde) = attend(g, enc.q_fin, self.w3, self.w5)?;

        let wv = g.param(self.w_v);
        let logits = g.matmul(c_tilde, wv)?;
        let p_vocab = g.softmax(logits, Axis::Rows, None)?;

        let switch = |g: &mut Graph, summary: NodeId, w: ParamId, forced: Option<f64>| -> Result<NodeId> {
            if let Some(v) = forced {
                return Ok(g.constant(Tensor::scalar(v)));
            }
            let feats = g.concat_cols(&[summary, h, prev])?;
            let w = g.param(w);
            let z = g.matmul(feats, w)?;
            g.sigmoid(z)
        };
        let gamma = switch(g, c_tilde, self.w_pv, self.force_gamma)?;
        let lambda = switch(g, q_tilde, self.w_cq, self.force_lambda)?;
        Ok((
            StepOutput { p_vocab, alpha_c, alpha_q, gamma, lambda },
            DecoderState { h, cell, c_tilde },
        ))
    }

    /// Numeric mixture for a step.
    pub fn distribution(&self, g: &Graph, out: &StepOutput, ext: &ExtendedVocab) -> Result<OutputDistribution> {
        mix(
            g.value(out.p_vocab).data(),
            g.value(out.alpha_c).data(),
            g.value(out.alpha_q).data(),
            g.value(out.gamma).item(),
            g.value(out.lambda).item(),
            ext,
        )
    }

    /// Differentiable probability of extended id `target`.
    pub fn gold_prob(&self, g: &mut Graph, out: &StepOutput, ext: &ExtendedVocab, target: usize) -> Result<NodeId> {
        let src = ext.sources(target);
        let part = |g: &mut Graph, node: NodeId, idx: &[usize]| -> Result<NodeId> {
            if idx.is_empty() {
                Ok(g.constant(Tensor::scalar(0.0)))
            } else {
                g.gather_sum(node, idx)
            }
        };
        let pv = part(g, out.p_vocab, &src.vocab.into_iter().collect::<Vec<_>>())?;
        let pc = part(g, out.alpha_c, &src.context)?;
        let pq = part(g, out.alpha_q, &src.question)?;
        let one_minus_l = g.one_minus(out.lambda)?;
        let a = g.mul(out.lambda, pc)?;
        let b = g.mul(one_minus_l, pq)?;
        let pointer = g.add(a, b)?;
        let one_minus_g = g.one_minus(out.gamma)?;
        let pointer = g.mul(one_minus_g, pointer)?;
        let gen = g.mul(out.gamma, pv)?;
        g.add(gen, pointer)
    }

    /// Teacher-forced gold probabilities for `target` (extended ids ending in
    /// `<eos>`); decoder inputs are the initialization token and the answer
    /// words that precede each step.
    pub fn teacher_forced<S: AsRef<str>>(
        &self,
        g: &mut Graph,
        embedder: &Embedder,
        enc: EncodedPair,
        ext: &ExtendedVocab,
        answer: &[S],
        target: &[usize],
    ) -> Result<Vec<NodeId>> {
        if target.is_empty() || target.len() != answer.len() + 1 {
            return Err(Error::Invalid(format!(
                "target of length {} for an answer of {} words",
                target.len(),
                answer.len()
            )));
        }
        let inputs = &answer[..target.len() - 1];
        let a = self.input_embeddings(g, embedder, inputs)?;
        let a_ppr = self.embed_answer(g, a)?;
        let a_self = self.self_attention(g, a_ppr, enc.c_fin)?;
        let mut state = self.initial_state(g);
        let mut probs = Vec::with_capacity(target.len());
        for (t, &gold) in target.iter().enumerate() {
            let prev = g.slice_rows(a_self, t, 1)?;
            let (out, next) = self.decode_step(g, prev, state, enc)?;
            probs.push(self.gold_prob(g, &out, ext, gold)?);
            state = next;
        }
        Ok(probs)
    }

    /// Per-step outputs under teacher forcing, for inspection.
    pub fn teacher_forced_steps<S: AsRef<str>>(
        &self,
        g: &mut Graph,
        embedder: &Embedder,
        enc: EncodedPair,
        inputs: &[S],
    ) -> Result<Vec<StepOutput>> {
        let a = self.input_embeddings(g, embedder, inputs)?;
        let a_ppr = self.embed_answer(g, a)?;
        let a_self = self.self_attention(g, a_ppr, enc.c_fin)?;
        let mut state = self.initial_state(g);
        let mut outs = Vec::with_capacity(inputs.len() + 1);
        for t in 0..=inputs.len() {
            let prev = g.slice_rows(a_self, t, 1)?;
            let (out, next) = self.decode_step(g, prev, state, enc)?;
            outs.push(out);
            state = next;
        }
        Ok(outs)
    }

    /// Greedy decoding; the self-attention block is re-run over the growing
    /// prefix at every step. Stops at `<eos>` or after `max_len` tokens.
    pub fn greedy_decode(
        &self,
        g: &mut Graph,
        embedder: &Embedder,
        enc: EncodedPair,
        ext: &ExtendedVocab,
        max_len: usize,
    ) -> Result<Decoded> {
        if max_len == 0 {
            return Err(Error::Invalid("max_len must be at least 1".into()));
        }
        let mut words: Vec<String> = Vec::new();
        let mut ids = Vec::new();
        let mut switches = Vec::new();
        let mut state = self.initial_state(g);
        let mut ended = false;
        for t in 0..max_len {
            let a = self.input_embeddings(g, embedder, &words)?;
            let a_ppr = self.embed_answer(g, a)?;
            let a_self = self.self_attention(g, a_ppr, enc.c_fin)?;
            let prev = g.slice_rows(a_self, t, 1)?;
            let (out, next) = self.decode_step(g, prev, state, enc)?;
            state = next;
            let dist = self.distribution(g, &out, ext)?;
            let id = dist.argmax();
            if id == ext.eos() {
                ended = true;
                break;
            }
            switches.push((dist.gamma, dist.lambda));
            ids.push(id);
            words.push(ext.word(id).to_string());
        }
        Ok(Decoded { ids, words, switches, ended })
    }
}

/// Result of greedy decoding. `switches` holds `(γ, λ)` for every emitted
/// word; the terminating `<eos>` step is not included.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub ids: Vec<usize>,
    pub words: Vec<String>,
    pub switches: Vec<(f64, f64)>,
    pub ended: bool,
}

/// `−Σ log p` over the given gold probabilities (each clamped before the log).
pub fn nll_loss(g: &mut Graph, gold_probs: &[NodeId]) -> Result<NodeId> {
    if gold_probs.is_empty() {
        return Err(Error::Invalid("loss over zero steps".into()));
    }
    let logs = gold_probs.iter().map(|&p| g.log(p)).collect::<Result<Vec<_>>>()?;
    let all = g.concat_cols(&logs)?;
    let total = g.sum(all)?;
    g.scale(total, -1.0)
}

/// Mean `(γ, (1−γ)λ, (1−γ)(1−λ))`: how much weight went to the vocabulary,
/// the context pointer and the question pointer.
pub fn pointer_usage_stats(switches: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if switches.is_empty() {
        return Err(Error::Invalid("pointer usage needs at least one step".into()));
    }
    let n = switches.len() as f64;
    let (mut v, mut c, mut q) = (0.0, 0.0, 0.0);
    for &(gamma, lambda) in switches {
        v += gamma;
        c += (1.0 - gamma) * lambda;
        q += (1.0 - gamma) * (1.0 - lambda);
    }
    Ok((v / n, c / n, q / n))
}

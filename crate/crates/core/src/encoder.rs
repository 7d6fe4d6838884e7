//! Context/question encoder: shared projection and BiLSTM, dummy-augmented
//! dual coattention, compression, stacked self-attention and final BiLSTMs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::nn::{BiLstm, MultiHead, ResidualFfn};
use crate::tensor::{Axis, Graph, NodeId, ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub d_emb: usize,
    pub d: usize,
    pub f: usize,
    pub heads: usize,
    pub layers: usize,
}

#[derive(Debug, Clone)]
pub struct SelfAttentionLayer {
    pub attn: MultiHead,
    pub ffn: ResidualFfn,
}

impl SelfAttentionLayer {
    pub fn new(params: &mut ParamSet, prefix: &str, d: usize, f: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(SelfAttentionLayer {
            attn: MultiHead::new(params, &format!("{prefix}.attn"), d, heads, rng)?,
            ffn: ResidualFfn::new(params, &format!("{prefix}.ffn"), d, f, rng)?,
        })
    }

    /// `FFN(X + MultiHead(X, X, X))`
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let a = self.attn.forward(g, x, x, x, false)?;
        let s = g.add(x, a)?;
        self.ffn.forward(g, s)
    }
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub dims: EncoderDims,
    /// `d_emb × d`, shared by context and question.
    pub w1: ParamId,
    pub ind: BiLstm,
    /// `1 × d` each.
    pub dummy_c: ParamId,
    pub dummy_q: ParamId,
    pub com_c: BiLstm,
    pub com_q: BiLstm,
    pub self_c: Vec<SelfAttentionLayer>,
    pub self_q: Vec<SelfAttentionLayer>,
    pub fin_c: BiLstm,
    pub fin_q: BiLstm,
}

/// Final encodings: `c_fin` is `l × d`, `q_fin` is `m × d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodedPair {
    pub c_fin: NodeId,
    pub q_fin: NodeId,
}

/// Dummy-dropped coattention outputs.
#[derive(Debug, Clone, Copy)]
pub struct Coattention {
    /// `m × d`
    pub c_sum: NodeId,
    /// `l × d`
    pub q_sum: NodeId,
    /// `l × d`
    pub c_coa: NodeId,
    /// `m × d`
    pub q_coa: NodeId,
}

impl EncoderParams {
    pub fn new(params: &mut ParamSet, dims: EncoderDims, rng: &mut impl Rng) -> Result<Self> {
        let EncoderDims { d_emb, d, f, heads, layers } = dims;
        if d % 2 != 0 || d == 0 {
            return Err(Error::Config {
                field: "d".into(),
                message: format!("model width must be even and positive, got {d}"),
            });
        }
        if layers == 0 {
            return Err(Error::Config {
                field: "self_layers".into(),
                message: "at least one self-attention layer is required".into(),
            });
        }
        let h = d / 2;
        let stack = |side: &str, params: &mut ParamSet, rng: &mut _| -> Result<Vec<SelfAttentionLayer>> {
            (0..layers)
                .map(|i| SelfAttentionLayer::new(params, &format!("enc.self_{side}.{i}"), d, f, heads, rng))
                .collect()
        };
        Ok(EncoderParams {
            dims,
            w1: params.add_uniform("enc.w1", d_emb, d, rng)?,
            ind: BiLstm::new(params, "enc.ind", d, h, rng)?,
            dummy_c: params.add_uniform("enc.dummy_c", 1, d, rng)?,
            dummy_q: params.add_uniform("enc.dummy_q", 1, d, rng)?,
            com_c: BiLstm::new(params, "enc.com_c", 4 * d, h, rng)?,
            com_q: BiLstm::new(params, "enc.com_q", 4 * d, h, rng)?,
            self_c: stack("c", params, rng)?,
            self_q: stack("q", params, rng)?,
            fin_c: BiLstm::new(params, "enc.fin_c", d, h, rng)?,
            fin_q: BiLstm::new(params, "enc.fin_q", d, h, rng)?,
        })
    }

    /// Runs the whole encoder on embedded context (`l × d_emb`) and question
    /// (`m × d_emb`).
    pub fn encode(&self, g: &mut Graph, c: NodeId, q: NodeId) -> Result<EncodedPair> {
        for (name, x) in [("context", c), ("question", q)] {
            if g.shape(x).0 == 0 {
                return Err(Error::Invalid(format!("empty {name}")));
            }
        }
        let w1 = g.param(self.w1);
        let (c_proj, q_proj) = project_inputs(g, c, q, w1)?;
        let (c_ind, q_ind) = independent_encode(g, c_proj, q_proj, &self.ind)?;
        let dc = g.param(self.dummy_c);
        let dq = g.param(self.dummy_q);
        let (c_plus, q_plus, s_cq, s_qc) = align(g, c_ind, q_ind, dc, dq)?;
        let co = coattend(g, s_cq, s_qc, c_plus, q_plus)?;
        let c_coa = g.dropout(co.c_coa)?;
        let q_coa = g.dropout(co.q_coa)?;
        let co = Coattention { c_coa, q_coa, ..co };
        let (c_com, q_com) = compress(g, [c_proj, c_ind, co.q_sum, co.c_coa], [q_proj, q_ind, co.c_sum, co.q_coa], &self.com_c, &self.com_q)?;
        let c_self = self_attend(g, c_com, &self.self_c)?;
        let q_self = self_attend(g, q_com, &self.self_q)?;
        let c_in = g.dropout(c_self)?;
        let q_in = g.dropout(q_self)?;
        Ok(EncodedPair {
            c_fin: self.fin_c.forward(g, c_in)?,
            q_fin: self.fin_q.forward(g, q_in)?,
        })
    }

    /// Encodes padded inputs by keeping only the first `l` and `m` rows, so
    /// pad rows cannot influence the result.
    pub fn encode_padded(&self, g: &mut Graph, c: NodeId, l: usize, q: NodeId, m: usize) -> Result<EncodedPair> {
        let c = g.slice_rows(c, 0, l)?;
        let q = g.slice_rows(q, 0, m)?;
        self.encode(g, c, q)
    }
}

/// `C·W₁` and `Q·W₁` with one shared matrix.
pub fn project_inputs(g: &mut Graph, c: NodeId, q: NodeId, w1: NodeId) -> Result<(NodeId, NodeId)> {
    Ok((g.matmul(c, w1)?, g.matmul(q, w1)?))
}

/// Shared BiLSTM over both projected sequences, with dropout on its inputs.
pub fn independent_encode(g: &mut Graph, c_proj: NodeId, q_proj: NodeId, lstm: &BiLstm) -> Result<(NodeId, NodeId)> {
    let c_in = g.dropout(c_proj)?;
    let q_in = g.dropout(q_proj)?;
    Ok((lstm.forward(g, c_in)?, lstm.forward(g, q_in)?))
}

/// Prepends the dummy rows and returns `(C⁺, Q⁺, S_cq, S_qc)` where
/// `S_cq = colsoftmax(C⁺Q⁺ᵀ)` and `S_qc = colsoftmax(Q⁺C⁺ᵀ)`.
pub fn align(
    g: &mut Graph,
    c_ind: NodeId,
    q_ind: NodeId,
    dummy_c: NodeId,
    dummy_q: NodeId,
) -> Result<(NodeId, NodeId, NodeId, NodeId)> {
    let c_plus = g.concat_rows(&[dummy_c, c_ind])?;
    let q_plus = g.concat_rows(&[dummy_q, q_ind])?;
    let a = g.matmul_nt(c_plus, q_plus)?;
    let s_cq = g.softmax(a, Axis::Cols, None)?;
    let at = g.matmul_nt(q_plus, c_plus)?;
    let s_qc = g.softmax(at, Axis::Cols, None)?;
    Ok((c_plus, q_plus, s_cq, s_qc))
}

/// Summaries and coattended representations, with the dummy row dropped
/// from all four results.
pub fn coattend(g: &mut Graph, s_cq: NodeId, s_qc: NodeId, c_plus: NodeId, q_plus: NodeId) -> Result<Coattention> {
    let c_sum = g.matmul_tn(s_cq, c_plus)?;
    let q_sum = g.matmul_tn(s_qc, q_plus)?;
    let c_coa = g.matmul_tn(s_qc, c_sum)?;
    let q_coa = g.matmul_tn(s_cq, q_sum)?;
    let drop = |g: &mut Graph, x: NodeId| {
        let n = g.shape(x).0;
        g.slice_rows(x, 1, n - 1)
    };
    Ok(Coattention {
        c_sum: drop(g, c_sum)?,
        q_sum: drop(g, q_sum)?,
        c_coa: drop(g, c_coa)?,
        q_coa: drop(g, q_coa)?,
    })
}

/// BiLSTMs over `[proj; ind; other-side sum; coa]` for each side.
pub fn compress(
    g: &mut Graph,
    c_parts: [NodeId; 4],
    q_parts: [NodeId; 4],
    com_c: &BiLstm,
    com_q: &BiLstm,
) -> Result<(NodeId, NodeId)> {
    let mut side = |parts: [NodeId; 4], lstm: &BiLstm| -> Result<NodeId> {
        let rows = g.shape(parts[0]).0;
        if let Some(p) = parts.iter().find(|&&p| g.shape(p).0 != rows) {
            return Err(Error::shape("compress", format!("row counts {rows} vs {}", g.shape(*p).0)));
        }
        let x = g.concat_cols(&parts)?;
        let x = g.dropout(x)?;
        lstm.forward(g, x)
    };
    Ok((side(c_parts, com_c)?, side(q_parts, com_q)?))
}

pub fn self_attend(g: &mut Graph, x: NodeId, layers: &[SelfAttentionLayer]) -> Result<NodeId> {
    layers.iter().try_fold(x, |x, layer| layer.forward(g, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Mode, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> EncoderDims {
        EncoderDims { d_emb: 6, d: 4, f: 3, heads: 2, layers: 2 }
    }

    #[test]
    fn shapes_follow_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = ParamSet::new();
        let enc = EncoderParams::new(&mut params, dims(), &mut rng).unwrap();
        let mut g = Graph::new(&params, Mode::EVAL, 0);
        let c = g.constant(Tensor::uniform(5, 6, 1.0, &mut rng));
        let q = g.constant(Tensor::uniform(3, 6, 1.0, &mut rng));
        let out = enc.encode(&mut g, c, q).unwrap();
        assert_eq!(g.shape(out.c_fin), (5, 4));
        assert_eq!(g.shape(out.q_fin), (3, 4));
    }

    #[test]
    fn odd_width_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = ParamSet::new();
        let d = EncoderDims { d: 5, ..dims() };
        assert!(EncoderParams::new(&mut params, d, &mut rng).is_err());
    }

    #[test]
    fn alignment_columns_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::detached();
        let c = g.constant(Tensor::uniform(3, 4, 1.0, &mut rng));
        let q = g.constant(Tensor::uniform(2, 4, 1.0, &mut rng));
        let dc = g.constant(Tensor::uniform(1, 4, 1.0, &mut rng));
        let dq = g.constant(Tensor::uniform(1, 4, 1.0, &mut rng));
        let (_, _, s_cq, s_qc) = align(&mut g, c, q, dc, dq).unwrap();
        assert_eq!(g.shape(s_cq), (4, 3));
        assert_eq!(g.shape(s_qc), (3, 4));
        for s in [s_cq, s_qc] {
            let t = g.value(s).transpose();
            for r in 0..t.rows() {
                assert!((t.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

//! Shared neural building blocks: attention, residual feed-forward with layer
//! normalization, and (bi)LSTMs. Each block stores the [`ParamId`]s it reads,
//! so one parameter set can back many forward passes.

use rand::Rng;

use super::dense::Tensor;
use super::graph::{Axis, Graph, Mask, NodeId};
use super::params::{ParamId, ParamSet};
use crate::error::{Error, Result};

/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

/// Softmax of a plain tensor along `axis`.
pub fn softmax_normalize(x: &Tensor, axis: Axis, mask: Option<&Mask>) -> Result<Tensor> {
    let mut g = Graph::detached();
    let n = g.constant(x.clone());
    let y = g.softmax(n, axis, mask)?;
    Ok(g.value(y).clone())
}

/// Layer normalization of a plain tensor with `1×c` gain and bias rows.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut g = Graph::detached();
    let (xn, gn, bn) = (
        g.constant(x.clone()),
        g.constant(gain.clone()),
        g.constant(bias.clone()),
    );
    let y = g.layer_norm(xn, gn, bn)?;
    Ok(g.value(y).clone())
}

/// `softmax(X Yᵀ / √d) Z` where `d` is the key width. Attention weights pass
/// through dropout before multiplying `Z`.
pub fn attention(
    g: &mut Graph,
    x: NodeId,
    y: NodeId,
    z: NodeId,
    mask: Option<&Mask>,
) -> Result<NodeId> {
    let (xs, ys, zs) = (g.shape(x), g.shape(y), g.shape(z));
    if xs.1 != ys.1 || ys.0 != zs.0 || xs.1 == 0 {
        return Err(Error::shape(
            "attention",
            format!("X {xs:?}, Y {ys:?}, Z {zs:?}"),
        ));
    }
    let scores = g.matmul_nt(x, y)?;
    let scaled = g.scale(scores, 1.0 / (xs.1 as f64).sqrt())?;
    let weights = g.softmax(scaled, Axis::Rows, mask)?;
    let weights = g.dropout(weights)?;
    g.matmul(weights, z)
}

/// Plain-tensor scaled dot-product attention.
pub fn scaled_dot_attention(
    x: &Tensor,
    y: &Tensor,
    z: &Tensor,
    mask: Option<&Mask>,
) -> Result<Tensor> {
    let mut g = Graph::detached();
    let (xn, yn, zn) = (
        g.constant(x.clone()),
        g.constant(y.clone()),
        g.constant(z.clone()),
    );
    let out = attention(&mut g, xn, yn, zn, mask)?;
    Ok(g.value(out).clone())
}

/// Multi-head attention where every head projects to the full model width
/// `d`; the `p` head outputs are concatenated and mapped back by `W_o`.
#[derive(Debug, Clone)]
pub struct MultiHead {
    /// `d_in × p·d` each, head `j` in columns `j·d..(j+1)·d`.
    pub wx: ParamId,
    pub wy: ParamId,
    pub wz: ParamId,
    /// `p·d × d`
    pub wo: ParamId,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHead {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads < 1 {
            return Err(Error::Invalid("multi-head attention needs at least one head".into()));
        }
        let pd = heads * dim;
        Ok(MultiHead {
            wx: params.add_uniform(format!("{prefix}.wx"), dim, pd, rng)?,
            wy: params.add_uniform(format!("{prefix}.wy"), dim, pd, rng)?,
            wz: params.add_uniform(format!("{prefix}.wz"), dim, pd, rng)?,
            wo: params.add_uniform(format!("{prefix}.wo"), pd, dim, rng)?,
            heads,
            dim,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        x: NodeId,
        y: NodeId,
        z: NodeId,
        causal: bool,
    ) -> Result<NodeId> {
        if self.heads < 1 {
            return Err(Error::Invalid("multi-head attention needs at least one head".into()));
        }
        let (wx, wy, wz, wo) = (
            g.param(self.wx),
            g.param(self.wy),
            g.param(self.wz),
            g.param(self.wo),
        );
        let xp = g.matmul(x, wx)?;
        let yp = g.matmul(y, wy)?;
        let zp = g.matmul(z, wz)?;
        let mask = if causal {
            let (n, m) = (g.shape(x).0, g.shape(y).0);
            Some(Mask::from_fn(n, m, |r, c| c > r))
        } else {
            None
        };
        let mut heads = Vec::with_capacity(self.heads);
        for j in 0..self.heads {
            let (xj, yj, zj) = if self.heads == 1 {
                (xp, yp, zp)
            } else {
                (
                    g.slice_cols(xp, j * self.dim, self.dim)?,
                    g.slice_cols(yp, j * self.dim, self.dim)?,
                    g.slice_cols(zp, j * self.dim, self.dim)?,
                )
            };
            heads.push(attention(g, xj, yj, zj, mask.as_ref())?);
        }
        let joined = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)?
        };
        g.matmul(joined, wo)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(params: &mut ParamSet, prefix: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: params.add_full(format!("{prefix}.gain"), 1, dim, 1.0)?,
            bias: params.add_full(format!("{prefix}.bias"), 1, dim, 0.0)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let (gain, bias) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm(x, gain, bias)
    }
}

/// Residual feed-forward block `LN_out(X + ReLU(LN_in(X)·U)·V)`.
#[derive(Debug, Clone)]
pub struct ResidualFfn {
    /// `d × f`
    pub u: ParamId,
    /// `f × d`
    pub v: ParamId,
    pub norm_in: LayerNorm,
    pub norm_out: LayerNorm,
}

impl ResidualFfn {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(ResidualFfn {
            u: params.add_uniform(format!("{prefix}.u"), dim, hidden, rng)?,
            v: params.add_uniform(format!("{prefix}.v"), hidden, dim, rng)?,
            norm_in: LayerNorm::new(params, &format!("{prefix}.ln_in"), dim)?,
            norm_out: LayerNorm::new(params, &format!("{prefix}.ln_out"), dim)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let (u, v) = (g.param(self.u), g.param(self.v));
        if g.shape(x).1 != g.shape(u).0 {
            return Err(Error::shape(
                "residual_ffn",
                format!("X {:?} vs U {:?}", g.shape(x), g.shape(u)),
            ));
        }
        let xn = self.norm_in.forward(g, x)?;
        let hidden = g.matmul(xn, u)?;
        let hidden = g.relu(hidden)?;
        let branch = g.matmul(hidden, v)?;
        let branch = g.dropout(branch)?;
        let sum = g.add(branch, x)?;
        self.norm_out.forward(g, sum)
    }
}

/// Standard LSTM cell; gate column blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct LstmParams {
    /// `d_in × 4h`
    pub w_ih: ParamId,
    /// `h × 4h`
    pub w_hh: ParamId,
    /// `1 × 4h`
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut bias = Tensor::zeros(1, 4 * hidden);
        for k in hidden..2 * hidden {
            bias.set(0, k, FORGET_BIAS);
        }
        Ok(LstmParams {
            w_ih: params.add_uniform(format!("{prefix}.w_ih"), input, 4 * hidden, rng)?,
            w_hh: params.add_uniform(format!("{prefix}.w_hh"), hidden, 4 * hidden, rng)?,
            bias: params.add(format!("{prefix}.bias"), bias)?,
            input,
            hidden,
        })
    }

    /// Runs the cell given precomputed input pre-activations `x·W_ih + b`.
    fn cell(
        &self,
        g: &mut Graph,
        pre_x: NodeId,
        state: (NodeId, NodeId),
    ) -> Result<(NodeId, NodeId)> {
        let h = self.hidden;
        let w_hh = g.param(self.w_hh);
        let rec = g.matmul(state.0, w_hh)?;
        let pre = g.add(pre_x, rec)?;
        let s = g.sigmoid(pre)?;
        let i = g.slice_cols(s, 0, h)?;
        let f = g.slice_cols(s, h, h)?;
        let o = g.slice_cols(s, 3 * h, h)?;
        let cand = g.slice_cols(pre, 2 * h, h)?;
        let cand = g.tanh(cand)?;
        let keep = g.mul(f, state.1)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c)?;
        let h = g.mul(o, tc)?;
        Ok((h, c))
    }

    /// One step for a `1 × d_in` input row; `state` is `(h, c)`, each `1 × h`.
    pub fn step(
        &self,
        g: &mut Graph,
        x: NodeId,
        state: (NodeId, NodeId),
    ) -> Result<(NodeId, NodeId)> {
        if g.shape(x) != (1, self.input)
            || g.shape(state.0) != (1, self.hidden)
            || g.shape(state.1) != (1, self.hidden)
        {
            return Err(Error::shape(
                "lstm_step",
                format!(
                    "x {:?}, h {:?}, c {:?} for input {} hidden {}",
                    g.shape(x),
                    g.shape(state.0),
                    g.shape(state.1),
                    self.input,
                    self.hidden
                ),
            ));
        }
        let (w_ih, b) = (g.param(self.w_ih), g.param(self.bias));
        let px = g.matmul(x, w_ih)?;
        let px = g.add(px, b)?;
        self.cell(g, px, state)
    }

    pub fn zero_state(&self, g: &mut Graph) -> (NodeId, NodeId) {
        let h = g.constant(Tensor::zeros(1, self.hidden));
        let c = g.constant(Tensor::zeros(1, self.hidden));
        (h, c)
    }

    /// Hidden states for every row of `xs` (`T × d_in`), in processing order.
    fn run(&self, g: &mut Graph, xs: NodeId, reverse: bool) -> Result<Vec<NodeId>> {
        let t_len = g.shape(xs).0;
        if g.shape(xs).1 != self.input {
            return Err(Error::shape(
                "lstm",
                format!("input width {} != {}", g.shape(xs).1, self.input),
            ));
        }
        let (w_ih, b) = (g.param(self.w_ih), g.param(self.bias));
        let px = g.matmul(xs, w_ih)?;
        let px = g.add_row(px, b)?;
        let mut state = self.zero_state(g);
        let mut out = vec![state.0; t_len];
        let order: Vec<usize> = if reverse {
            (0..t_len).rev().collect()
        } else {
            (0..t_len).collect()
        };
        for t in order {
            let row = g.slice_rows(px, t, 1)?;
            state = self.cell(g, row, state)?;
            out[t] = state.0;
        }
        Ok(out)
    }
}

/// Bidirectional LSTM; row `t` of the output is `[h_fwd(t); h_bwd(t)]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstm {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(BiLstm {
            fwd: LstmParams::new(params, &format!("{prefix}.fwd"), input, hidden, rng)?,
            bwd: LstmParams::new(params, &format!("{prefix}.bwd"), input, hidden, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    pub fn forward(&self, g: &mut Graph, xs: NodeId) -> Result<NodeId> {
        bilstm_encode(g, xs, &self.fwd, &self.bwd)
    }
}

pub fn bilstm_encode(
    g: &mut Graph,
    xs: NodeId,
    fwd: &LstmParams,
    bwd: &LstmParams,
) -> Result<NodeId> {
    if g.shape(xs).0 == 0 {
        return Err(Error::Invalid("bilstm over an empty sequence".into()));
    }
    let f = fwd.run(g, xs, false)?;
    let b = bwd.run(g, xs, true)?;
    let fwd_rows = g.concat_rows(&f)?;
    let bwd_rows = g.concat_rows(&b)?;
    g.concat_cols(&[fwd_rows, bwd_rows])
}

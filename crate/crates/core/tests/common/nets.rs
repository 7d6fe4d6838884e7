//! Straight-line forward passes over nested `Vec`s, reading parameters by
//! name. Nothing here touches the autodiff graph.

use std::collections::HashMap;

use mqan::data::char_ngram_buckets;
use mqan::tensor::ParamSet;

pub type Mat = Vec<Vec<f64>>;

pub fn param(params: &ParamSet, name: &str) -> Mat {
    let id = params.id(name).unwrap_or_else(|| panic!("no parameter `{name}`"));
    params.get(id).to_rows()
}

pub fn mm(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner, "matmul shape");
            (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect()
        })
        .collect()
}

pub fn tr(a: &Mat) -> Mat {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn hcat(parts: &[&Mat]) -> Mat {
    (0..parts[0].len())
        .map(|i| parts.iter().flat_map(|p| p[i].iter().copied()).collect())
        .collect()
}

pub fn vcat(a: &Mat, b: &Mat) -> Mat {
    a.iter().chain(b).cloned().collect()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn softmax_rows(a: &Mat) -> Mat {
    a.iter().map(|r| softmax(r)).collect()
}

pub fn softmax_cols(a: &Mat) -> Mat {
    tr(&softmax_rows(&tr(a)))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn layer_norm(x: &Mat, gain: &[f64], bias: &[f64]) -> Mat {
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = (var + 1e-5).sqrt();
            r.iter().enumerate().map(|(j, v)| (v - mean) / sd * gain[j] + bias[j]).collect()
        })
        .collect()
}

/// One LSTM step; gates are laid out input, forget, candidate, output.
pub fn lstm_step(p: &ParamSet, prefix: &str, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w_ih = param(p, &format!("{prefix}.w_ih"));
    let w_hh = param(p, &format!("{prefix}.w_hh"));
    let b = &param(p, &format!("{prefix}.bias"))[0];
    let n = h.len();
    let pre: Vec<f64> = (0..4 * n)
        .map(|j| {
            let from_x: f64 = x.iter().enumerate().map(|(k, xk)| xk * w_ih[k][j]).sum();
            let from_h: f64 = h.iter().enumerate().map(|(k, hk)| hk * w_hh[k][j]).sum();
            from_x + b[j] + from_h
        })
        .collect();
    let mut h2 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for k in 0..n {
        let i = sigmoid(pre[k]);
        let f = sigmoid(pre[n + k]);
        let g = pre[2 * n + k].tanh();
        let o = sigmoid(pre[3 * n + k]);
        c2[k] = f * c[k] + i * g;
        h2[k] = o * c2[k].tanh();
    }
    (h2, c2)
}

pub fn lstm(p: &ParamSet, prefix: &str, xs: &Mat, reverse: bool) -> Mat {
    let n = param(p, &format!("{prefix}.w_hh")).len();
    let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
    let mut out = vec![Vec::new(); xs.len()];
    let order: Vec<usize> = if reverse { (0..xs.len()).rev().collect() } else { (0..xs.len()).collect() };
    for t in order {
        let (h2, c2) = lstm_step(p, prefix, &xs[t], &h, &c);
        h = h2;
        c = c2;
        out[t] = h.clone();
    }
    out
}

pub fn bilstm(p: &ParamSet, prefix: &str, xs: &Mat) -> Mat {
    let f = lstm(p, &format!("{prefix}.fwd"), xs, false);
    let b = lstm(p, &format!("{prefix}.bwd"), xs, true);
    hcat(&[&f, &b])
}

/// Multi-head attention where each of `heads` heads works at width `d`.
pub fn mha(p: &ParamSet, prefix: &str, x: &Mat, y: &Mat, z: &Mat, heads: usize, causal: bool) -> Mat {
    let xp = mm(x, &param(p, &format!("{prefix}.wx")));
    let yp = mm(y, &param(p, &format!("{prefix}.wy")));
    let zp = mm(z, &param(p, &format!("{prefix}.wz")));
    let d = xp[0].len() / heads;
    let mut joined: Mat = vec![Vec::new(); x.len()];
    for hd in 0..heads {
        let cols = |m: &Mat| -> Mat { m.iter().map(|r| r[hd * d..(hd + 1) * d].to_vec()).collect() };
        let (xh, yh, zh) = (cols(&xp), cols(&yp), cols(&zp));
        for (i, row) in joined.iter_mut().enumerate() {
            let scores: Vec<f64> = (0..yh.len())
                .map(|j| {
                    let s: f64 = (0..d).map(|k| xh[i][k] * yh[j][k]).sum::<f64>() / (d as f64).sqrt();
                    if causal && j > i {
                        s - 1e9
                    } else {
                        s
                    }
                })
                .collect();
            let w = softmax(&scores);
            for k in 0..d {
                row.push((0..zh.len()).map(|j| w[j] * zh[j][k]).sum());
            }
        }
    }
    mm(&joined, &param(p, &format!("{prefix}.wo")))
}

/// `LN_out(X + ReLU(LN_in(X)·U)·V)`
pub fn ffn(p: &ParamSet, prefix: &str, x: &Mat) -> Mat {
    let ln = |name: &str, m: &Mat| {
        layer_norm(m, &param(p, &format!("{prefix}.{name}.gain"))[0], &param(p, &format!("{prefix}.{name}.bias"))[0])
    };
    let hidden: Mat = mm(&ln("ln_in", x), &param(p, &format!("{prefix}.u")))
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect();
    let branch = mm(&hidden, &param(p, &format!("{prefix}.v")));
    ln("ln_out", &add(x, &branch))
}

/// Mean of the hashed character-trigram rows of each word.
pub fn embed(p: &ParamSet, words: &[String], buckets: usize) -> Mat {
    let table = param(p, "embed.char_ngrams");
    words
        .iter()
        .map(|w| {
            let bag = char_ngram_buckets(w, buckets);
            let mut row = vec![0.0; table[0].len()];
            for b in &bag {
                for (r, t) in row.iter_mut().zip(&table[*b]) {
                    *r += t / bag.len() as f64;
                }
            }
            row
        })
        .collect()
}

/// Intermediate encoder values, for inspection by the tests.
pub struct EncoderTrace {
    pub c_plus: Mat,
    pub q_plus: Mat,
    pub s_cq: Mat,
    pub s_qc: Mat,
    pub c_fin: Mat,
    pub q_fin: Mat,
}

pub fn encoder(p: &ParamSet, c: &Mat, q: &Mat, heads: usize, layers: usize) -> EncoderTrace {
    let w1 = param(p, "enc.w1");
    let (c_proj, q_proj) = (mm(c, &w1), mm(q, &w1));
    let c_ind = bilstm(p, "enc.ind", &c_proj);
    let q_ind = bilstm(p, "enc.ind", &q_proj);
    let c_plus = vcat(&param(p, "enc.dummy_c"), &c_ind);
    let q_plus = vcat(&param(p, "enc.dummy_q"), &q_ind);
    let affinity = mm(&c_plus, &tr(&q_plus));
    let s_cq = softmax_cols(&affinity);
    let s_qc = softmax_cols(&tr(&affinity));
    let c_sum = mm(&tr(&s_cq), &c_plus);
    let q_sum = mm(&tr(&s_qc), &q_plus);
    let c_coa = mm(&tr(&s_qc), &c_sum);
    let q_coa = mm(&tr(&s_cq), &q_sum);
    let drop = |m: &Mat| m[1..].to_vec();
    let c_com = bilstm(p, "enc.com_c", &hcat(&[&c_proj, &c_ind, &drop(&q_sum), &drop(&c_coa)]));
    let q_com = bilstm(p, "enc.com_q", &hcat(&[&q_proj, &q_ind, &drop(&c_sum), &drop(&q_coa)]));
    let stack = |side: &str, mut x: Mat| {
        for i in 0..layers {
            let pre = format!("enc.self_{side}.{i}");
            let a = mha(p, &format!("{pre}.attn"), &x, &x, &x, heads, false);
            x = ffn(p, &format!("{pre}.ffn"), &add(&x, &a));
        }
        x
    };
    let c_self = stack("c", c_com);
    let q_self = stack("q", q_com);
    EncoderTrace {
        c_fin: bilstm(p, "enc.fin_c", &c_self),
        q_fin: bilstm(p, "enc.fin_q", &q_self),
        c_plus,
        q_plus,
        s_cq,
        s_qc,
    }
}

pub fn positional(n: usize, d: usize) -> Mat {
    (0..n)
        .map(|t| {
            (0..d)
                .map(|k| {
                    let i = (k / 2) as f64;
                    let angle = t as f64 / 10000f64.powf(2.0 * i / d as f64);
                    if k % 2 == 0 {
                        angle.sin()
                    } else {
                        angle.cos()
                    }
                })
                .collect()
        })
        .collect()
}

/// One teacher-forced step's ingredients.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub p_vocab: Vec<f64>,
    pub alpha_c: Vec<f64>,
    pub alpha_q: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
}

/// Decoder under teacher forcing. `inputs` are the embedded decoder inputs
/// (initialization row first); one step is produced per input row.
pub fn decoder(p: &ParamSet, inputs: &Mat, c_fin: &Mat, q_fin: &Mat, heads: usize, layers: usize) -> Vec<StepTrace> {
    let proj = mm(inputs, &param(p, "dec.w2_proj"));
    let d = proj[0].len();
    let mut x = add(&proj, &positional(proj.len(), d));
    for i in 0..layers {
        let pre = format!("dec.layer.{i}");
        let a = mha(p, &format!("{pre}.self_attn"), &x, &x, &x, heads, true);
        let qm = add(&a, &x);
        let ac = mha(p, &format!("{pre}.ctx_attn"), &qm, c_fin, c_fin, heads, false);
        x = ffn(p, &format!("{pre}.ffn"), &add(&ac, &qm));
    }
    let (w2, w3, w4, w5) = (param(p, "dec.w2_att"), param(p, "dec.w3"), param(p, "dec.w4"), param(p, "dec.w5"));
    let (wv, wpv, wcq) = (param(p, "dec.w_v"), param(p, "dec.w_pv"), param(p, "dec.w_cq"));
    let (mut h, mut cell, mut ct) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut out = Vec::new();
    for row in &x {
        let lstm_in: Vec<f64> = row.iter().chain(&ct).copied().collect();
        let (h2, c2) = lstm_step(p, "dec.lstm", &lstm_in, &h, &cell);
        h = h2;
        cell = c2;
        let attend = |fin: &Mat, w: &Mat, comb: &Mat| -> (Vec<f64>, Vec<f64>) {
            // score_j = hᵀ W fin_j
            let wh: Vec<f64> = (0..d).map(|a| (0..d).map(|b| w[a][b] * h[b]).sum()).collect();
            let scores: Vec<f64> = fin.iter().map(|f| f.iter().zip(&wh).map(|(u, v)| u * v).sum()).collect();
            let alpha = softmax(&scores);
            let summary: Vec<f64> = (0..d).map(|k| fin.iter().zip(&alpha).map(|(f, a)| a * f[k]).sum()).collect();
            let joined: Vec<f64> = summary.iter().chain(&h).copied().collect();
            let mixed = mm(&vec![joined], comb).remove(0);
            (alpha, mixed.into_iter().map(f64::tanh).collect())
        };
        let (alpha_c, c_tilde) = attend(c_fin, &w2, &w4);
        let (alpha_q, q_tilde) = attend(q_fin, &w3, &w5);
        let logits = mm(&vec![c_tilde.clone()], &wv).remove(0);
        let switch = |s: &[f64], w: &Mat| {
            let feats: Vec<f64> = s.iter().chain(&h).chain(row).copied().collect();
            sigmoid(feats.iter().zip(w).map(|(f, wr)| f * wr[0]).sum())
        };
        out.push(StepTrace {
            p_vocab: softmax(&logits),
            gamma: switch(&c_tilde, &wpv),
            lambda: switch(&q_tilde, &wcq),
            alpha_c,
            alpha_q,
        });
        ct = c_tilde;
    }
    out
}

/// Probability mass per word: generation over `vocab`, copying over the
/// context and question positions.
pub fn mixture_by_word(step: &StepTrace, vocab: &[String], context: &[String], question: &[String]) -> HashMap<String, f64> {
    let mut m: HashMap<String, f64> = HashMap::new();
    for (w, p) in vocab.iter().zip(&step.p_vocab) {
        *m.entry(w.clone()).or_default() += step.gamma * p;
    }
    for (w, a) in context.iter().zip(&step.alpha_c) {
        *m.entry(w.clone()).or_default() += (1.0 - step.gamma) * step.lambda * a;
    }
    for (w, a) in question.iter().zip(&step.alpha_q) {
        *m.entry(w.clone()).or_default() += (1.0 - step.gamma) * (1.0 - step.lambda) * a;
    }
    m
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len(), "row count");
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len(), "column count");
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

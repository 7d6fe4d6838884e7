//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order of the tape; `backward` walks it once in reverse.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dense::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use super::params::{Grads, ParamId, ParamSet};
use crate::error::{Error, Result};

pub const MASK_VALUE: f64 = -1e9;
pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Which slices a softmax normalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Each row sums to one.
    Rows,
    /// Each column sums to one.
    Cols,
}

/// Boolean attention mask; `true` marks a blocked entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    blocked: Vec<bool>,
}

impl Mask {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut blocked = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                blocked.push(f(r, c));
            }
        }
        Mask {
            rows,
            cols,
            blocked,
        }
    }

    /// Blocks every key position after the query position.
    pub fn causal(n: usize) -> Self {
        Mask::from_fn(n, n, |r, c| c > r)
    }

    pub fn is_blocked(&self, r: usize, c: usize) -> bool {
        self.blocked[r * self.cols + c]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn transpose(&self) -> Mask {
        Mask::from_fn(self.cols, self.rows, |r, c| self.is_blocked(c, r))
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    MatMulTN(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleBy(NodeId, NodeId),
    OneMinus(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    Transpose(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Dropout(NodeId, Vec<f64>),
    Sum(NodeId),
    Log(NodeId),
    GatherSum(NodeId, Vec<usize>),
    EmbedBag(NodeId, Vec<Vec<usize>>),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Forward-pass configuration: dropout applies only when `train` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub train: bool,
    pub dropout: f64,
}

impl Mode {
    pub const EVAL: Mode = Mode {
        train: false,
        dropout: 0.0,
    };

    pub fn train(dropout: f64) -> Self {
        Mode {
            train: true,
            dropout,
        }
    }
}

pub struct Graph<'p> {
    params: Option<&'p ParamSet>,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
    mode: Mode,
    rng: ChaCha8Rng,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet, mode: Mode, seed: u64) -> Self {
        Graph {
            params: Some(params),
            nodes: Vec::with_capacity(1024),
            param_nodes: vec![None; params.len()],
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A graph without parameters, for evaluating pure functions.
    pub fn detached() -> Graph<'static> {
        Graph {
            params: None,
            nodes: Vec::new(),
            param_nodes: Vec::new(),
            mode: Mode::EVAL,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params.expect("param node without params").get(*p),
            _ => unreachable!("node without a value"),
        }
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let v = self.value(id);
        (v.rows(), v.cols())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("{op:?}")));
        }
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Leaf,
            requires_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Node for a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} · {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out = matmul_nn(va, vb);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(Error::shape(
                "matmul_nt",
                format!("{:?} · {:?}ᵀ", self.shape(a), self.shape(b)),
            ));
        }
        let out = matmul_nt(va, vb);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMulNT(a, b), rg)
    }

    /// `aᵀ · b`
    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(Error::shape(
                "matmul_tn",
                format!("{:?}ᵀ · {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out = matmul_tn(va, vb);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMulTN(a, b), rg)
    }

    fn check_same(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(&[va.rows(), va.cols()], data).expect("same shape")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg)
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + row {:?}", self.shape(a), self.shape(row)),
            ));
        }
        let c = va.cols();
        let mut out = va.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += vr.data()[i % c];
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(out, Op::AddRow(a, row), rg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let out = self.value(a).map(|v| v * s);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Multiplies every entry of `a` by the 1×1 node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if self.shape(s) != (1, 1) {
            return Err(Error::shape("scale_by", format!("scalar is {:?}", self.shape(s))));
        }
        let k = self.value(s).item();
        let out = self.value(a).map(|v| v * k);
        let rg = self.rg(a) || self.rg(s);
        self.push(out, Op::ScaleBy(a, s), rg)
    }

    pub fn one_minus(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(|v| 1.0 - v);
        let rg = self.rg(a);
        self.push(out, Op::OneMinus(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Softmax along `axis`; blocked mask entries come out exactly zero.
    pub fn softmax(&mut self, a: NodeId, axis: Axis, mask: Option<&Mask>) -> Result<NodeId> {
        match axis {
            Axis::Rows => self.softmax_rows(a, mask),
            Axis::Cols => {
                let t = self.transpose(a)?;
                let mt = mask.map(Mask::transpose);
                let s = self.softmax_rows(t, mt.as_ref())?;
                self.transpose(s)
            }
        }
    }

    fn softmax_rows(&mut self, a: NodeId, mask: Option<&Mask>) -> Result<NodeId> {
        let va = self.value(a);
        let (r, c) = (va.rows(), va.cols());
        if let Some(m) = mask {
            if m.shape() != (r, c) {
                return Err(Error::shape(
                    "softmax",
                    format!("mask {:?} vs input {:?}", m.shape(), (r, c)),
                ));
            }
        }
        if va.data().iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("softmax input".into()));
        }
        let mut out = va.clone();
        let data = out.data_mut();
        for i in 0..r {
            let row = &mut data[i * c..(i + 1) * c];
            if let Some(m) = mask {
                if (0..c).all(|j| m.is_blocked(i, j)) {
                    return Err(Error::FullyMasked { index: i });
                }
                for (j, v) in row.iter_mut().enumerate() {
                    if m.is_blocked(i, j) {
                        *v += MASK_VALUE;
                    }
                }
            }
            softmax_in_place(row);
        }
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.shape(parts[0]).0;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            let shapes: Vec<_> = parts.iter().map(|&p| self.shape(p)).collect();
            return Err(Error::shape("concat_cols", format!("row counts differ: {shapes:?}")));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::from_vec(&[rows, cols], data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = self.shape(parts[0]).1;
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            let shapes: Vec<_> = parts.iter().map(|&p| self.shape(p)).collect();
            return Err(Error::shape("concat_rows", format!("column counts differ: {shapes:?}")));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols.max(1);
        let out = Tensor::from_vec(&[rows, cols], data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(out, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.shape(a);
        if start + len > r {
            return Err(Error::shape("slice_rows", format!("{start}+{len} > {r}")));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::from_vec(&[len, c], data)?;
        let rg = self.rg(a);
        self.push(out, Op::SliceRows(a, start), rg)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(Error::shape("slice_cols", format!("{start}+{len} > {c}")));
        }
        let va = self.value(a);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&va.row_slice(i)[start..start + len]);
        }
        let out = Tensor::from_vec(&[r, len], data)?;
        let rg = self.rg(a);
        self.push(out, Op::SliceCols(a, start), rg)
    }

    /// Row-wise layer normalization with affine `gain` and `bias` rows.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if self.shape(gain) != (1, c) || self.shape(bias) != (1, c) {
            return Err(Error::shape("layer_norm", "gain/bias must be 1×cols"));
        }
        if c < 2 {
            return Err(Error::shape("layer_norm", "rows need at least two entries"));
        }
        let vx = self.value(x);
        let mut xhat = Tensor::zeros(r, c);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = vx.row_slice(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (j, v) in row.iter().enumerate() {
                xhat.set(i, j, (v - mean) * is);
            }
            inv_std.push(is);
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let out = Tensor::from_fn(r, c, |i, j| xhat.get(i, j) * g[j] + b[j]);
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Inverted dropout; the identity outside training or at rate zero.
    pub fn dropout(&mut self, a: NodeId) -> Result<NodeId> {
        let Mode { train, dropout } = self.mode;
        if !train || dropout <= 0.0 {
            return Ok(a);
        }
        let keep = 1.0 - dropout;
        let n = self.value(a).numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let va = self.value(a);
        let data = va.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::from_vec(&[va.rows(), va.cols()], data)?;
        let rg = self.rg(a);
        self.push(out, Op::Dropout(a, mask), rg)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    /// Natural log with inputs clamped below at [`LOG_CLAMP`].
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(|v| v.max(LOG_CLAMP).ln());
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg)
    }

    /// 1×1 sum of the entries of `a` at the given flat indices (repeats count twice).
    pub fn gather_sum(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let va = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= va.numel()) {
            return Err(Error::shape("gather_sum", format!("index {bad} >= {}", va.numel())));
        }
        let out = Tensor::scalar(indices.iter().map(|&i| va.data()[i]).sum());
        let rg = self.rg(a);
        self.push(out, Op::GatherSum(a, indices.to_vec()), rg)
    }

    /// Row `t` of the output is the mean of the `table` rows listed in `bags[t]`
    /// (zero for an empty bag).
    pub fn embed_bag(&mut self, table: NodeId, bags: Vec<Vec<usize>>) -> Result<NodeId> {
        let vt = self.value(table);
        let (tr, c) = (vt.rows(), vt.cols());
        let mut out = Tensor::zeros(bags.len(), c);
        for (t, bag) in bags.iter().enumerate() {
            if bag.is_empty() {
                continue;
            }
            let w = 1.0 / bag.len() as f64;
            for &b in bag {
                if b >= tr {
                    return Err(Error::shape("embed_bag", format!("row {b} >= {tr}")));
                }
                let src = vt.row_slice(b);
                let dst = &mut out.data_mut()[t * c..(t + 1) * c];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        let rg = self.rg(table);
        self.push(out, Op::EmbedBag(table, bags), rg)
    }

    /// Backpropagates from a 1×1 node, adding parameter gradients into `grads`.
    pub fn backward(&self, loss: NodeId, grads: &mut Grads) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape("backward", "loss must be 1×1"));
        }
        self.backward_with(loss, Tensor::scalar(1.0), grads)
    }

    pub fn backward_with(&self, out: NodeId, seed: Tensor, grads: &mut Grads) -> Result<()> {
        if !self.value(out).same_shape(&seed) {
            return Err(Error::shape("backward", "seed shape differs from output"));
        }
        let mut adj: Vec<Option<Tensor>> = (0..=out.0).map(|_| None).collect();
        adj[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, g, &mut adj, grads);
        }
        Ok(())
    }

    fn accumulate(&self, adj: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut adj[id.0] {
            Some(t) => t.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate_with(
        &self,
        adj: &mut [Option<Tensor>],
        id: NodeId,
        f: impl FnOnce(&mut Tensor),
    ) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let (r, c) = self.shape(id);
        let slot = adj[id.0].get_or_insert_with(|| Tensor::zeros(r, c));
        f(slot);
    }

    fn propagate(&self, i: usize, g: Tensor, adj: &mut [Option<Tensor>], grads: &mut Grads) {
        let out = self.nodes[i].value.as_ref();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Param(p) => grads.get_mut(*p).add_assign(&g),
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(adj, *a, matmul_nt(&g, self.value(*b)));
                }
                if self.rg(*b) {
                    self.accumulate(adj, *b, matmul_tn(self.value(*a), &g));
                }
            }
            Op::MatMulNT(a, b) => {
                if self.rg(*a) {
                    self.accumulate(adj, *a, matmul_nn(&g, self.value(*b)));
                }
                if self.rg(*b) {
                    self.accumulate(adj, *b, matmul_tn(&g, self.value(*a)));
                }
            }
            Op::MatMulTN(a, b) => {
                if self.rg(*a) {
                    self.accumulate(adj, *a, matmul_nt(self.value(*b), &g));
                }
                if self.rg(*b) {
                    self.accumulate(adj, *b, matmul_nn(self.value(*a), &g));
                }
            }
            Op::Add(a, b) => {
                if self.rg(*b) {
                    self.accumulate(adj, *b, g.clone());
                }
                self.accumulate(adj, *a, g);
            }
            Op::AddRow(a, row) => {
                if self.rg(*row) {
                    let c = g.cols();
                    self.accumulate_with(adj, *row, |t| {
                        for (k, v) in g.data().iter().enumerate() {
                            t.data_mut()[k % c] += v;
                        }
                    });
                }
                self.accumulate(adj, *a, g);
            }
            Op::Sub(a, b) => {
                if self.rg(*b) {
                    self.accumulate(adj, *b, g.map(|v| -v));
                }
                self.accumulate(adj, *a, g);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let d = zip(&g, vb, |x, y| x * y);
                    self.accumulate(adj, *a, d);
                }
                if self.rg(*b) {
                    let d = zip(&g, va, |x, y| x * y);
                    self.accumulate(adj, *b, d);
                }
            }
            Op::Scale(a, s) => self.accumulate(adj, *a, g.map(|v| v * s)),
            Op::ScaleBy(a, s) => {
                let k = self.value(*s).item();
                if self.rg(*s) {
                    let dot: f64 = g.data().iter().zip(self.value(*a).data()).map(|(x, y)| x * y).sum();
                    self.accumulate(adj, *s, Tensor::scalar(dot));
                }
                if self.rg(*a) {
                    self.accumulate(adj, *a, g.map(|v| v * k));
                }
            }
            Op::OneMinus(a) => self.accumulate(adj, *a, g.map(|v| -v)),
            Op::Tanh(a) => {
                let y = out.expect("value");
                self.accumulate(adj, *a, zip(&g, y, |d, y| d * (1.0 - y * y)));
            }
            Op::Sigmoid(a) => {
                let y = out.expect("value");
                self.accumulate(adj, *a, zip(&g, y, |d, y| d * y * (1.0 - y)));
            }
            Op::Relu(a) => {
                let y = out.expect("value");
                self.accumulate(adj, *a, zip(&g, y, |d, y| if y > 0.0 { d } else { 0.0 }));
            }
            Op::SoftmaxRows(a) => {
                let y = out.expect("value");
                let c = y.cols();
                let mut d = Tensor::zeros(y.rows(), c);
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        d.data_mut()[r * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(adj, *a, d);
            }
            Op::Transpose(a) => self.accumulate(adj, *a, g.transpose()),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.rg(p) {
                        let d = Tensor::from_fn(r, c, |i, j| g.get(i, offset + j));
                        self.accumulate(adj, p, d);
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.rg(p) {
                        let d = g.data()[offset * c..(offset + r) * c].to_vec();
                        self.accumulate(adj, p, Tensor::from_vec(&[r, c], d).expect("shape"));
                    }
                    offset += r;
                }
            }
            Op::SliceRows(a, start) => {
                let c = g.cols();
                let start = *start;
                self.accumulate_with(adj, *a, |t| {
                    let dst = &mut t.data_mut()[start * c..start * c + g.numel()];
                    for (d, v) in dst.iter_mut().zip(g.data()) {
                        *d += v;
                    }
                });
            }
            Op::SliceCols(a, start) => {
                let start = *start;
                self.accumulate_with(adj, *a, |t| {
                    for r in 0..g.rows() {
                        for j in 0..g.cols() {
                            let v = t.get(r, start + j) + g.get(r, j);
                            t.set(r, start + j, v);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let (r, c) = (g.rows(), g.cols());
                let gv = self.value(*gain).data();
                if self.rg(*gain) {
                    self.accumulate_with(adj, *gain, |t| {
                        for k in 0..r * c {
                            t.data_mut()[k % c] += g.data()[k] * xhat.data()[k];
                        }
                    });
                }
                if self.rg(*bias) {
                    self.accumulate_with(adj, *bias, |t| {
                        for k in 0..r * c {
                            t.data_mut()[k % c] += g.data()[k];
                        }
                    });
                }
                if self.rg(*x) {
                    let mut d = Tensor::zeros(r, c);
                    for i in 0..r {
                        let gh: Vec<f64> = (0..c).map(|j| g.get(i, j) * gv[j]).collect();
                        let mean_gh = gh.iter().sum::<f64>() / c as f64;
                        let mean_ghx =
                            (0..c).map(|j| gh[j] * xhat.get(i, j)).sum::<f64>() / c as f64;
                        for j in 0..c {
                            d.set(
                                i,
                                j,
                                inv_std[i] * (gh[j] - mean_gh - xhat.get(i, j) * mean_ghx),
                            );
                        }
                    }
                    self.accumulate(adj, *x, d);
                }
            }
            Op::Dropout(a, mask) => {
                let d = Tensor::from_vec(
                    &[g.rows(), g.cols()],
                    g.data().iter().zip(mask).map(|(x, m)| x * m).collect(),
                )
                .expect("shape");
                self.accumulate(adj, *a, d);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                self.accumulate(adj, *a, Tensor::full(r, c, g.item()));
            }
            Op::Log(a) => {
                let x = self.value(*a);
                let d = zip(&g, x, |d, x| if x > LOG_CLAMP { d / x } else { 0.0 });
                self.accumulate(adj, *a, d);
            }
            Op::GatherSum(a, idx) => {
                let gv = g.item();
                self.accumulate_with(adj, *a, |t| {
                    for &k in idx {
                        t.data_mut()[k] += gv;
                    }
                });
            }
            Op::EmbedBag(table, bags) => {
                let c = g.cols();
                self.accumulate_with(adj, *table, |t| {
                    for (r, bag) in bags.iter().enumerate() {
                        if bag.is_empty() {
                            continue;
                        }
                        let w = 1.0 / bag.len() as f64;
                        let src = g.row_slice(r);
                        for &b in bag {
                            let dst = &mut t.data_mut()[b * c..(b + 1) * c];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += w * s;
                            }
                        }
                    }
                });
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(&[a.rows(), a.cols()], data).expect("same shape")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Each op pushes a node holding its forward value plus whatever it needs
//! for the backward rule. `backward` walks the tape once in reverse.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamGrads, ParamId, ParamStore};
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    LogSech2(Var),
    Minimum(Var, Var),
    Maximum(Var, Var),
    Softmax(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    LayerNorm {
        input: Var,
        inv_std: Vec<f64>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        input: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    GatherRows {
        input: Var,
        idx: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    SmoothL1 {
        input: Var,
        target: Vec<f64>,
        beta: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single forward pass. Parameters are pulled in by id from the store the
/// graph was created against.
pub struct Graph<'s> {
    nodes: Vec<Node>,
    store: Option<&'s ParamStore>,
    params: HashMap<ParamId, Var>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'s> Graph<'s> {
    /// Inference graph: dropout is the identity.
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            nodes: Vec::new(),
            store: Some(store),
            params: HashMap::new(),
            dropout_rng: None,
        }
    }

    /// Training graph: dropout masks are drawn from `dropout_seed`.
    pub fn training(store: &'s ParamStore, dropout_seed: u64) -> Self {
        Graph {
            dropout_rng: Some(ChaCha8Rng::seed_from_u64(dropout_seed)),
            ..Self::new(store)
        }
    }

    /// Graph with no parameter store, for free-standing computations.
    pub fn detached() -> Graph<'static> {
        Graph {
            nodes: Vec::new(),
            store: None,
            params: HashMap::new(),
            dropout_rng: None,
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Constant input: no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf input.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let store = self.store.expect("graph has no parameter store");
        let v = self.push(store.get(id).clone(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (r, c) = self.dims(a);
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        let ng = self.ng(a);
        self.push(Tensor::matrix(r, c, data).unwrap(), op, ng)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (r, c) = self.dims(a);
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(r, c, data).unwrap(), op, ng))
    }

    // --- linear algebra ---

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims(a);
        let (k2, m) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; n * m];
        matmul_acc(&mut out, self.data(a), self.data(b), n, k, m);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), ng))
    }

    /// a · bᵀ
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims(a);
        let (m, k2) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul_t", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; n * m];
        matmul_bt_acc(&mut out, self.data(a), self.data(b), n, k, m);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMulT(a, b), ng))
    }

    // --- elementwise ---

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("minimum", a, b, Op::Minimum(a, b), f64::min)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("maximum", a, b, Op::Maximum(a, b), f64::max)
    }

    fn row_broadcast(&self, name: &'static str, a: Var, row: Var) -> Result<()> {
        let (_, c) = self.dims(a);
        if self.dims(row) != (1, c) {
            return Err(Error::shape(name, self.shape(a), self.shape(row)));
        }
        Ok(())
    }

    /// a (n×m) + row (1×m), broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast("add_row", a, row)?;
        let (r, c) = self.dims(a);
        let rv = self.data(row);
        let data = self
            .data(a)
            .chunks(c)
            .flat_map(|ch| ch.iter().zip(rv).map(|(x, y)| x + y))
            .collect();
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::AddRow(a, row), ng))
    }

    /// a (n×m) ⊙ row (1×m), broadcast over rows.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast("mul_row", a, row)?;
        let (r, c) = self.dims(a);
        let rv = self.data(row);
        let data = self
            .data(a)
            .chunks(c)
            .flat_map(|ch| ch.iter().zip(rv).map(|(x, y)| x * y))
            .collect();
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::MulRow(a, row), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + s)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    /// log(1 − tanh²(a)), evaluated without cancellation.
    pub fn log_sech2(&mut self, a: Var) -> Var {
        self.unary(a, Op::LogSech2(a), log_sech2)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a).expect("same var")
    }

    // --- row-wise reductions and normalizations ---

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let mut data = self.data(a).to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let ng = self.ng(a);
        self.push(Tensor::matrix(r, c, data).unwrap(), Op::Softmax(a), ng)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let mut data = self.data(a).to_vec();
        for row in data.chunks_mut(c) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let ng = self.ng(a);
        self.push(Tensor::matrix(r, c, data).unwrap(), Op::LogSoftmax(a), ng)
    }

    /// n×m → n×1
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let data = self.data(a).chunks(c).map(log_sum_exp).collect();
        let ng = self.ng(a);
        self.push(Tensor::matrix(r, 1, data).unwrap(), Op::LogSumExp(a), ng)
    }

    /// Per-row standardization to mean 0, variance 1 (no affine part).
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let mut data = self.data(a).to_vec();
        let mut inv_std = Vec::with_capacity(r);
        for row in data.chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * is);
            inv_std.push(is);
        }
        let ng = self.ng(a);
        self.push(
            Tensor::matrix(r, c, data).unwrap(),
            Op::LayerNorm { input: a, inv_std },
            ng,
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let s = if d.is_empty() {
            0.0
        } else {
            d.iter().sum::<f64>() / d.len() as f64
        };
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Mean(a), ng)
    }

    /// n×m → n×1 row sums.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let data = self.data(a).chunks(c).map(|ch| ch.iter().sum()).collect();
        let ng = self.ng(a);
        self.push(Tensor::matrix(r, 1, data).unwrap(), Op::RowSum(a), ng)
    }

    // --- indexing and layout ---

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.dims(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape("embedding", self.shape(table), &[bad]));
        }
        let t = self.data(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let ng = self.ng(table);
        Ok(self.push(
            Tensor::matrix(ids.len(), d, data)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.dims(parts[0]).0;
        for &p in parts {
            if self.dims(p).0 != r {
                return Err(Error::shape(
                    "concat_cols",
                    self.shape(parts[0]),
                    self.shape(p),
                ));
            }
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(
            Tensor::matrix(r, total, data)?,
            Op::ConcatCols(parts.to_vec()),
            ng,
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start + len > c {
            return Err(Error::shape("slice_cols", self.shape(a), &[start, len]));
        }
        let data = self
            .data(a)
            .chunks(c)
            .flat_map(|ch| ch[start..start + len].iter().copied())
            .collect();
        let ng = self.ng(a);
        Ok(self.push(
            Tensor::matrix(r, len, data)?,
            Op::SliceCols { input: a, start },
            ng,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.dims(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pc != c {
                return Err(Error::shape(
                    "concat_rows",
                    self.shape(parts[0]),
                    self.shape(p),
                ));
            }
            rows += pr;
            data.extend_from_slice(self.data(p));
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(
            Tensor::matrix(rows, c, data)?,
            Op::ConcatRows(parts.to_vec()),
            ng,
        ))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::shape("gather_rows", self.shape(a), &[bad]));
        }
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.value(a).row(i));
        }
        let ng = self.ng(a);
        Ok(self.push(
            Tensor::matrix(idx.len(), c, data)?,
            Op::GatherRows {
                input: a,
                idx: idx.to_vec(),
            },
            ng,
        ))
    }

    /// Inverted dropout; identity outside training graphs or for `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        let Some(rng) = self.dropout_rng.as_mut() else {
            return a;
        };
        if p <= 0.0 {
            return a;
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.nodes[a.0].value.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let (r, c) = self.dims(a);
        let data = self.data(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let ng = self.ng(a);
        self.push(
            Tensor::matrix(r, c, data).unwrap(),
            Op::Dropout { input: a, mask },
            ng,
        )
    }

    // --- fused losses ---

    /// Per-row cross-entropy `logsumexp(row) − row[target]`, as n×1.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(logits);
        if targets.len() != r || targets.iter().any(|&t| t >= c) {
            return Err(Error::shape(
                "cross_entropy",
                self.shape(logits),
                &[targets.len()],
            ));
        }
        let mut probs = self.data(logits).to_vec();
        let mut out = Vec::with_capacity(r);
        for (row, &t) in probs.chunks_mut(c).zip(targets) {
            let lse = log_sum_exp(row);
            out.push(lse - row[t]);
            row.iter_mut().for_each(|x| *x = (*x - lse).exp());
        }
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::matrix(r, 1, out)?,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Elementwise smooth-L1 (Huber with transition at `beta`) against a
    /// constant target.
    pub fn smooth_l1(&mut self, a: Var, target: &Tensor, beta: f64) -> Result<Var> {
        if self.dims(a) != target.dims() {
            return Err(Error::shape("smooth_l1", self.shape(a), target.shape()));
        }
        let (r, c) = self.dims(a);
        let data = self
            .data(a)
            .iter()
            .zip(target.data())
            .map(|(&x, &t)| {
                let d = (x - t).abs();
                if d < beta {
                    0.5 * d * d / beta
                } else {
                    d - 0.5 * beta
                }
            })
            .collect();
        let ng = self.ng(a);
        Ok(self.push(
            Tensor::matrix(r, c, data)?,
            Op::SmoothL1 {
                input: a,
                target: target.data().to_vec(),
                beta,
            },
            ng,
        ))
    }

    // --- backward ---

    /// Gradients of the scalar `loss` with respect to every node that needs
    /// one.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", self.shape(loss), &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.backprop_node(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        let wants = |v: Var| nodes[v.0].needs_grad;
        fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
        }
        let out = node.value.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (n, k) = nodes[a.0].value.dims();
                let m = nodes[b.0].value.cols();
                if wants(*a) {
                    // ga (n×k) += g (n×m) · bᵀ
                    matmul_bt_acc(slot(grads, nodes, *a), g, val(*b), n, m, k);
                }
                if wants(*b) {
                    // gb (k×m) += aᵀ · g
                    matmul_at_acc(slot(grads, nodes, *b), val(*a), g, n, k, m);
                }
            }
            Op::MatMulT(a, b) => {
                let (n, k) = nodes[a.0].value.dims();
                let m = nodes[b.0].value.rows();
                if wants(*a) {
                    // ga (n×k) += g (n×m) · b (m×k)
                    matmul_acc(slot(grads, nodes, *a), g, val(*b), n, m, k);
                }
                if wants(*b) {
                    // gb (m×k) += gᵀ · a
                    matmul_at_acc(slot(grads, nodes, *b), g, val(*a), n, m, k);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        add_into(slot(grads, nodes, v), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    add_into(slot(grads, nodes, *a), g);
                }
                if wants(*b) {
                    slot(grads, nodes, *b)
                        .iter_mut()
                        .zip(g)
                        .for_each(|(s, g)| *s -= g);
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let bv = val(*b);
                    let s = slot(grads, nodes, *a);
                    for i in 0..g.len() {
                        s[i] += g[i] * bv[i];
                    }
                }
                if wants(*b) {
                    let av = val(*a);
                    let s = slot(grads, nodes, *b);
                    for i in 0..g.len() {
                        s[i] += g[i] * av[i];
                    }
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if wants(*a) {
                    let s = slot(grads, nodes, *a);
                    for i in 0..g.len() {
                        s[i] += g[i] / bv[i];
                    }
                }
                if wants(*b) {
                    let s = slot(grads, nodes, *b);
                    for i in 0..g.len() {
                        s[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                }
            }
            Op::AddRow(a, row) => {
                if wants(*a) {
                    add_into(slot(grads, nodes, *a), g);
                }
                if wants(*row) {
                    let c = nodes[row.0].value.len();
                    let s = slot(grads, nodes, *row);
                    for ch in g.chunks(c) {
                        add_into(s, ch);
                    }
                }
            }
            Op::MulRow(a, row) => {
                let c = nodes[row.0].value.len();
                if wants(*a) {
                    let rv = val(*row);
                    let s = slot(grads, nodes, *a);
                    for (sc, gc) in s.chunks_mut(c).zip(g.chunks(c)) {
                        for j in 0..c {
                            sc[j] += gc[j] * rv[j];
                        }
                    }
                }
                if wants(*row) {
                    let av = val(*a);
                    let s = slot(grads, nodes, *row);
                    for (ac, gc) in av.chunks(c).zip(g.chunks(c)) {
                        for j in 0..c {
                            s[j] += gc[j] * ac[j];
                        }
                    }
                }
            }
            Op::Scale(a, k) => {
                slot(grads, nodes, *a)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(s, g)| *s += k * g);
            }
            Op::AddScalar(a) => add_into(slot(grads, nodes, *a), g),
            Op::Relu(a) => {
                let s = slot(grads, nodes, *a);
                for i in 0..g.len() {
                    if out[i] > 0.0 {
                        s[i] += g[i];
                    }
                }
            }
            Op::Tanh(a) => {
                let s = slot(grads, nodes, *a);
                for i in 0..g.len() {
                    s[i] += g[i] * (1.0 - out[i] * out[i]);
                }
            }
            Op::Exp(a) => {
                let s = slot(grads, nodes, *a);
                for i in 0..g.len() {
                    s[i] += g[i] * out[i];
                }
            }
            Op::Log(a) => {
                let av = val(*a);
                let s = slot(grads, nodes, *a);
                for i in 0..g.len() {
                    s[i] += g[i] / av[i];
                }
            }
            Op::LogSech2(a) => {
                let av = val(*a);
                let s = slot(grads, nodes, *a);
                for i in 0..g.len() {
                    s[i] -= 2.0 * g[i] * av[i].tanh();
                }
            }
            Op::Minimum(a, b) | Op::Maximum(a, b) => {
                let av = val(*a);
                let take_a: Vec<bool> = (0..g.len()).map(|i| out[i] == av[i]).collect();
                if wants(*a) {
                    let s = slot(grads, nodes, *a);
                    for i in 0..g.len() {
                        if take_a[i] {
                            s[i] += g[i];
                        }
                    }
                }
                if wants(*b) {
                    let s = slot(grads, nodes, *b);
                    for i in 0..g.len() {
                        if !take_a[i] {
                            s[i] += g[i];
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let c = node.value.cols();
                let s = slot(grads, nodes, *a);
                for ((sc, gc), yc) in s.chunks_mut(c).zip(g.chunks(c)).zip(out.chunks(c)) {
                    let dot: f64 = gc.iter().zip(yc).map(|(g, y)| g * y).sum();
                    for j in 0..c {
                        sc[j] += yc[j] * (gc[j] - dot);
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let c = node.value.cols();
                let s = slot(grads, nodes, *a);
                for ((sc, gc), yc) in s.chunks_mut(c).zip(g.chunks(c)).zip(out.chunks(c)) {
                    let gs: f64 = gc.iter().sum();
                    for j in 0..c {
                        sc[j] += gc[j] - yc[j].exp() * gs;
                    }
                }
            }
            Op::LogSumExp(a) => {
                let c = nodes[a.0].value.cols();
                let av = val(*a);
                let s = slot(grads, nodes, *a);
                for (r, (sc, ac)) in s.chunks_mut(c).zip(av.chunks(c)).enumerate() {
                    for j in 0..c {
                        sc[j] += g[r] * (ac[j] - out[r]).exp();
                    }
                }
            }
            Op::LayerNorm { input, inv_std } => {
                let c = node.value.cols();
                let s = slot(grads, nodes, *input);
                for (r, ((sc, gc), yc)) in s
                    .chunks_mut(c)
                    .zip(g.chunks(c))
                    .zip(out.chunks(c))
                    .enumerate()
                {
                    let gm = gc.iter().sum::<f64>() / c as f64;
                    let gym = gc.iter().zip(yc).map(|(g, y)| g * y).sum::<f64>() / c as f64;
                    for j in 0..c {
                        sc[j] += inv_std[r] * (gc[j] - gm - yc[j] * gym);
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let d = nodes[table.0].value.cols();
                let s = slot(grads, nodes, *table);
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut s[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let pc = nodes[p.0].value.cols();
                    if wants(p) {
                        let s = slot(grads, nodes, p);
                        for (sc, gc) in s.chunks_mut(pc).zip(g.chunks(total)) {
                            add_into(sc, &gc[off..off + pc]);
                        }
                    }
                    off += pc;
                }
            }
            Op::SliceCols { input, start } => {
                let c = nodes[input.0].value.cols();
                let len = node.value.cols();
                let s = slot(grads, nodes, *input);
                for (sc, gc) in s.chunks_mut(c).zip(g.chunks(len)) {
                    add_into(&mut sc[*start..start + len], gc);
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = nodes[p.0].value.len();
                    if wants(p) {
                        add_into(slot(grads, nodes, p), &g[off..off + n]);
                    }
                    off += n;
                }
            }
            Op::GatherRows { input, idx } => {
                let c = node.value.cols();
                let s = slot(grads, nodes, *input);
                for (r, &i) in idx.iter().enumerate() {
                    add_into(&mut s[i * c..(i + 1) * c], &g[r * c..(r + 1) * c]);
                }
            }
            Op::Sum(a) => {
                slot(grads, nodes, *a).iter_mut().for_each(|s| *s += g[0]);
            }
            Op::Mean(a) => {
                let n = nodes[a.0].value.len().max(1) as f64;
                slot(grads, nodes, *a)
                    .iter_mut()
                    .for_each(|s| *s += g[0] / n);
            }
            Op::RowSum(a) => {
                let c = nodes[a.0].value.cols();
                let s = slot(grads, nodes, *a);
                for (r, sc) in s.chunks_mut(c).enumerate() {
                    sc.iter_mut().for_each(|x| *x += g[r]);
                }
            }
            Op::Dropout { input, mask } => {
                let s = slot(grads, nodes, *input);
                for i in 0..g.len() {
                    s[i] += g[i] * mask[i];
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let c = nodes[logits.0].value.cols();
                let s = slot(grads, nodes, *logits);
                for (r, (sc, pc)) in s.chunks_mut(c).zip(probs.chunks(c)).enumerate() {
                    for j in 0..c {
                        sc[j] += g[r] * pc[j];
                    }
                    sc[targets[r]] -= g[r];
                }
            }
            Op::SmoothL1 {
                input,
                target,
                beta,
            } => {
                let av = val(*input);
                let s = slot(grads, nodes, *input);
                for i in 0..g.len() {
                    let d = av[i] - target[i];
                    let dd = if d.abs() < *beta {
                        d / beta
                    } else {
                        d.signum()
                    };
                    s[i] += g[i] * dd;
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    row.iter_mut().for_each(|x| *x /= s);
}

/// log(1 − tanh²x) = −2·log cosh x
pub(crate) fn log_sech2(x: f64) -> f64 {
    let a = x.abs();
    -2.0 * (a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2)
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Add the parameter gradients of `graph` into `out`, times `scale`.
    pub fn accumulate_params(&self, graph: &Graph<'_>, out: &mut ParamGrads, scale: f64) {
        for (&id, &v) in &graph.params {
            if let Some(g) = self.wrt(v) {
                for (o, x) in out.get_mut(id).iter_mut().zip(g) {
                    *o += scale * x;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform() {
        let mut g = Graph::detached();
        let x = g.constant(Tensor::full(1, 4, 0.7));
        let y = g.softmax_rows(x);
        for &v in g.value(y).data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_norm_moments() {
        let mut g = Graph::detached();
        let x = g
            .constant(Tensor::from_rows(&[[1.0, 2.0, 3.0, 10.0], [-4.0, 0.5, 0.25, 8.0]]).unwrap());
        let y = g.layer_norm_rows(x);
        for row in g.value(y).data().chunks(4) {
            let m = row.iter().sum::<f64>() / 4.0;
            let v = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut g = Graph::detached();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("matmul"), "{err}");
        let c = g.constant(Tensor::zeros(3, 2));
        assert!(g.add(a, c).is_err());
    }

    #[test]
    fn cross_entropy_uniform_two_class() {
        let mut g = Graph::detached();
        let x = g.input(Tensor::zeros(1, 2));
        let ce = g.cross_entropy_rows(x, &[1]).unwrap();
        assert!((g.value(ce).item() - std::f64::consts::LN_2).abs() < 1e-15);
        let s = g.sum(ce);
        let gr = g.backward(s).unwrap();
        assert_eq!(gr.wrt(x).unwrap(), &[0.5, -0.5]);
    }

    #[test]
    fn log_sech2_matches_direct() {
        for &x in &[-3.0, -0.2, 0.0, 0.7, 5.0] {
            let t: f64 = f64::tanh(x);
            assert!((log_sech2(x) - (1.0 - t * t).ln()).abs() < 1e-12);
        }
        assert!(log_sech2(400.0).is_finite());
    }

    #[test]
    fn dropout_is_identity_in_inference() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::full(2, 2, 1.0));
        assert_eq!(g.dropout(x, 0.5), x);
        let mut g = Graph::training(&store, 1);
        let x = g.constant(Tensor::full(50, 50, 1.0));
        let y = g.dropout(x, 0.5);
        let kept = g.value(y).data().iter().filter(|&&v| v > 0.0).count();
        assert!(kept > 1000 && kept < 1500);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}

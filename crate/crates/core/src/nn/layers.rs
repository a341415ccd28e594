//! Transformer building blocks on top of the autodiff graph.

use super::graph::{Graph, Var};
use super::params::{Init, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            init.uniform_fan_in(in_dim, out_dim, in_dim),
        );
        let bias = store.add(
            format!("{name}.bias"),
            init.uniform_fan_in(1, out_dim, in_dim),
        );
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// Output layer starting at exactly zero.
    pub fn zeros(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), Tensor::zeros(in_dim, out_dim));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, out_dim));
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        vocab: usize,
        dim: usize,
    ) -> Self {
        let table = store.add(format!("{name}.table"), init.normal(vocab, dim, 1.0));
        Embedding { table, vocab, dim }
    }

    pub fn forward(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Var> {
        let t = g.param(self.table);
        g.embedding(t, ids)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: store.add(format!("{name}.gain"), Tensor::full(1, dim, 1.0)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(1, dim)),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let n = g.layer_norm_rows(x);
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        let y = g.mul_row(n, gain)?;
        g.add_row(y, bias)
    }
}

/// `T×T` additive mask forbidding attention to later positions.
pub fn causal_mask(len: usize) -> Tensor {
    let mut data = vec![0.0; len * len];
    for i in 0..len {
        for j in i + 1..len {
            data[i * len + j] = f64::NEG_INFINITY;
        }
    }
    Tensor::matrix(len, len, data).expect("square mask")
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub n_heads: usize,
    pub d_model: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        d_model: usize,
        n_heads: usize,
    ) -> Self {
        assert!(
            n_heads > 0 && d_model.is_multiple_of(n_heads),
            "d_model must divide into heads"
        );
        MultiHeadAttention {
            query: Linear::new(store, init, &format!("{name}.query"), d_model, d_model),
            key: Linear::new(store, init, &format!("{name}.key"), d_model, d_model),
            value: Linear::new(store, init, &format!("{name}.value"), d_model, d_model),
            output: Linear::new(store, init, &format!("{name}.output"), d_model, d_model),
            n_heads,
            d_model,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        query: Var,
        memory: Var,
        mask: Option<Var>,
    ) -> Result<Var> {
        Ok(self.forward_with_weights(g, query, memory, mask)?.0)
    }

    /// Attention output plus the per-head weight matrices (`Tq×Tk`).
    pub fn forward_with_weights(
        &self,
        g: &mut Graph<'_>,
        query: Var,
        memory: Var,
        mask: Option<Var>,
    ) -> Result<(Var, Vec<Var>)> {
        let tq = g.value(query).rows();
        let tk = g.value(memory).rows();
        if let Some(m) = mask {
            if g.value(m).dims() != (tq, tk) {
                return Err(Error::shape("attention mask", g.shape(m), &[tq, tk]));
            }
        }
        let q = self.query.forward(g, query)?;
        let k = self.key.forward(g, memory)?;
        let v = self.value.forward(g, memory)?;
        let dh = self.d_model / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.n_heads);
        let mut weights = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let scores = g.matmul_t(qh, kh)?;
            let mut scores = g.scale(scores, scale);
            if let Some(m) = mask {
                scores = g.add(scores, m)?;
            }
            let w = g.softmax_rows(scores);
            heads.push(g.matmul(w, vh)?);
            weights.push(w);
        }
        let cat = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)?
        };
        Ok((self.output.forward(g, cat)?, weights))
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        d_model: usize,
        hidden: usize,
    ) -> Self {
        FeedForward {
            inner: Linear::new(store, init, &format!("{name}.inner"), d_model, hidden),
            outer: Linear::new(store, init, &format!("{name}.outer"), hidden, d_model),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let h = self.inner.forward(g, x)?;
        let h = g.relu(h);
        self.outer.forward(g, h)
    }
}

/// Pre-norm encoder layer: self-attention then feed-forward, each residual.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub norm_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm_ffn: LayerNorm,
    pub ffn: FeedForward,
    pub dropout: f64,
}

impl EncoderLayer {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        d_model: usize,
        n_heads: usize,
        ffn_dim: usize,
        dropout: f64,
    ) -> Self {
        EncoderLayer {
            norm_attn: LayerNorm::new(store, &format!("{name}.norm_attn"), d_model),
            attn: MultiHeadAttention::new(store, init, &format!("{name}.attn"), d_model, n_heads),
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), d_model),
            ffn: FeedForward::new(store, init, &format!("{name}.ffn"), d_model, ffn_dim),
            dropout,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, mask: Option<Var>) -> Result<Var> {
        let n = self.norm_attn.forward(g, x)?;
        let a = self.attn.forward(g, n, n, mask)?;
        let a = g.dropout(a, self.dropout);
        let x = g.add(x, a)?;
        let n = self.norm_ffn.forward(g, x)?;
        let f = self.ffn.forward(g, n)?;
        let f = g.dropout(f, self.dropout);
        g.add(x, f)
    }
}

/// Pre-norm decoder layer: causal self-attention, cross-attention over a
/// memory sequence, feed-forward.
#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub norm_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub norm_cross: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm_ffn: LayerNorm,
    pub ffn: FeedForward,
    pub dropout: f64,
}

impl DecoderLayer {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        d_model: usize,
        n_heads: usize,
        ffn_dim: usize,
        dropout: f64,
    ) -> Self {
        DecoderLayer {
            norm_self: LayerNorm::new(store, &format!("{name}.norm_self"), d_model),
            self_attn: MultiHeadAttention::new(
                store,
                init,
                &format!("{name}.self_attn"),
                d_model,
                n_heads,
            ),
            norm_cross: LayerNorm::new(store, &format!("{name}.norm_cross"), d_model),
            cross_attn: MultiHeadAttention::new(
                store,
                init,
                &format!("{name}.cross_attn"),
                d_model,
                n_heads,
            ),
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), d_model),
            ffn: FeedForward::new(store, init, &format!("{name}.ffn"), d_model, ffn_dim),
            dropout,
        }
    }

    /// `causal` must be the additive mask from [`causal_mask`] sized to `x`.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var, memory: Var, causal: Var) -> Result<Var> {
        let n = self.norm_self.forward(g, x)?;
        let a = self.self_attn.forward(g, n, n, Some(causal))?;
        let a = g.dropout(a, self.dropout);
        let x = g.add(x, a)?;
        let n = self.norm_cross.forward(g, x)?;
        let c = self.cross_attn.forward(g, n, memory, None)?;
        let c = g.dropout(c, self.dropout);
        let x = g.add(x, c)?;
        let n = self.norm_ffn.forward(g, x)?;
        let f = self.ffn.forward(g, n)?;
        let f = g.dropout(f, self.dropout);
        g.add(x, f)
    }
}

/// Standard sinusoidal position table, `len × d_model`.
pub fn sinusoidal_positions(len: usize, d_model: usize) -> Tensor {
    let mut data = vec![0.0; len * d_model];
    for pos in 0..len {
        for i in 0..d_model {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
            data[pos * d_model + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::matrix(len, d_model, data).expect("positions")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(init: &mut Init, r: usize, c: usize) -> Tensor {
        init.normal(r, c, 1.0)
    }

    #[test]
    fn single_position_attention_is_value_projection() {
        let mut store = ParamStore::new();
        let mut init = Init::new(3);
        let mha = MultiHeadAttention::new(&mut store, &mut init, "a", 8, 2);
        let x_t = random(&mut init, 1, 8);
        let mut g = Graph::new(&store);
        let x = g.constant(x_t);
        let out = mha.forward(&mut g, x, x, None).unwrap();
        let v = mha.value.forward(&mut g, x).unwrap();
        let expected = mha.output.forward(&mut g, v).unwrap();
        for (a, b) in g.value(out).data().iter().zip(g.value(expected).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut store = ParamStore::new();
        let mut init = Init::new(4);
        let mha = MultiHeadAttention::new(&mut store, &mut init, "a", 8, 2);
        let xt = random(&mut init, 5, 8);
        let mut g = Graph::new(&store);
        let x = g.constant(xt);
        let mask = g.constant(causal_mask(5));
        let (_, weights) = mha.forward_with_weights(&mut g, x, x, Some(mask)).unwrap();
        for w in weights {
            let t = g.value(w);
            for r in 0..5 {
                let s: f64 = t.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
                for c in r + 1..5 {
                    assert_eq!(t.get(r, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn decoder_is_causal() {
        let mut store = ParamStore::new();
        let mut init = Init::new(5);
        let layer = DecoderLayer::new(&mut store, &mut init, "d", 8, 2, 16, 0.0);
        let x_t = random(&mut init, 6, 8);
        let mem_t = random(&mut init, 4, 8);
        let run = |x_t: &Tensor| {
            let mut g = Graph::new(&store);
            let x = g.constant(x_t.clone());
            let m = g.constant(mem_t.clone());
            let mask = g.constant(causal_mask(6));
            let y = layer.forward(&mut g, x, m, mask).unwrap();
            g.value(y).clone()
        };
        let base = run(&x_t);
        let t = 2;
        let mut perturbed = x_t.clone();
        for r in t + 1..6 {
            for c in 0..8 {
                perturbed.data_mut()[r * 8 + c] += 0.37 * (c as f64 + 1.0);
            }
        }
        let after = run(&perturbed);
        for r in 0..=t {
            assert_eq!(base.row(r), after.row(r));
        }
        assert_ne!(base.row(t + 1), after.row(t + 1));
    }

    #[test]
    fn mask_shape_checked() {
        let mut store = ParamStore::new();
        let mut init = Init::new(6);
        let mha = MultiHeadAttention::new(&mut store, &mut init, "a", 4, 1);
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::zeros(3, 4));
        let m = g.constant(causal_mask(2));
        assert!(mha.forward(&mut g, x, x, Some(m)).is_err());
    }
}

//! Autoregressive layout generator: a causal transformer decoder that reads
//! the predictor outputs plus the previous step's box and emits mixture
//! parameters for every step.

use crate::error::{Error, Result};
use crate::nn::layers::{causal_mask, sinusoidal_positions, DecoderLayer, LayerNorm, Linear};
use crate::nn::{Graph, Init, ModelConfig, ParamStore, Tensor, Var};

use super::example::{Structure, TokenKind};
use super::gmm::standardize;

pub struct GeneratorOutput {
    /// `len × d_model` layout-aware representations.
    pub c: Var,
    /// `len × 6K` raw position-head outputs.
    pub position: Var,
    /// `len × 6K` raw size-head outputs.
    pub size: Var,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub input: Linear,
    pub layers: Vec<DecoderLayer>,
    pub norm: LayerNorm,
    pub position_head: Linear,
    pub size_head: Linear,
    pub d_model: usize,
    pub mixtures: usize,
}

impl Generator {
    pub fn new(store: &mut ParamStore, init: &mut Init, cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let k = cfg.mixtures;
        Generator {
            input: Linear::new(store, init, "generator.input", d + 8, d),
            layers: (0..cfg.n_decoder_layers)
                .map(|i| {
                    DecoderLayer::new(
                        store,
                        init,
                        &format!("generator.layer{i}"),
                        d,
                        cfg.n_heads,
                        cfg.ffn_dim,
                        cfg.dropout,
                    )
                })
                .collect(),
            norm: LayerNorm::new(store, "generator.norm", d),
            position_head: Linear::new(store, init, "generator.position", d, 6 * k),
            size_head: Linear::new(store, init, "generator.size", d, 6 * k),
            d_model: d,
            mixtures: k,
        }
    }

    /// Runs the decoder over the first `prev.rows()` steps. `f`, `s` and `p`
    /// span the whole sequence; `f` is also the cross-attention memory.
    /// `prev` row `t` is the standardized box of step `t − 1` (zeros at 0).
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        f: Var,
        s: Var,
        p: Var,
        prev: &Tensor,
    ) -> Result<GeneratorOutput> {
        let total = g.value(f).rows();
        let len = prev.rows();
        if len == 0 || len > total || prev.cols() != 4 {
            return Err(Error::shape("generator prefix", prev.shape(), g.shape(f)));
        }
        let rows: Vec<usize> = (0..len).collect();
        let (fp, sp, pp) = if len == total {
            (f, s, p)
        } else {
            (
                g.gather_rows(f, &rows)?,
                g.gather_rows(s, &rows)?,
                g.gather_rows(p, &rows)?,
            )
        };
        let b = g.constant(prev.clone());
        let e = g.concat_cols(&[fp, sp, pp, b])?;
        let x = self.input.forward(g, e)?;
        let pe = g.constant(sinusoidal_positions(len, self.d_model));
        let mut x = g.add(x, pe)?;
        let mask = g.constant(causal_mask(len));
        for layer in &self.layers {
            x = layer.forward(g, x, f, mask)?;
        }
        let c = self.norm.forward(g, x)?;
        let position = self.position_head.forward(g, c)?;
        let size = self.size_head.forward(g, c)?;
        Ok(GeneratorOutput { c, position, size })
    }
}

/// Standardized decoder-input box for a token carrying normalized `b`.
pub fn standardized_box(kind: TokenKind, b: [f64; 4]) -> [f64; 4] {
    match kind {
        TokenKind::Special => [0.0; 4],
        TokenKind::Predicate => [2.0 * b[0], 2.0 * b[1], 0.0, 0.0],
        TokenKind::Component(_) => b.map(standardize),
    }
}

/// Previous-box input for the first `len` steps given per-token boxes:
/// row 0 is zero and row `t` holds step `t − 1`.
pub fn shifted_boxes(structure: &Structure, boxes: &[[f64; 4]], len: usize) -> Tensor {
    let mut data = vec![0.0; len * 4];
    for t in 1..len {
        let b = standardized_box(structure.kinds[t - 1], boxes[t - 1]);
        data[t * 4..t * 4 + 4].copy_from_slice(&b);
    }
    Tensor::matrix(len, 4, data).expect("prev boxes")
}

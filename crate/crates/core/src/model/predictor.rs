//! Object/relation predictor: a masked transformer encoder over the five
//! token streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ag::{TokenSequence, MASK, TYPE_SPECIAL};
use crate::error::{Error, Result};
use crate::nn::layers::{Embedding, EncoderLayer, LayerNorm, Linear};
use crate::nn::{Graph, Init, ModelConfig, ParamStore, Var};

/// Token streams after BERT-style masking.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedTokens {
    pub word_ids: Vec<usize>,
    pub object_ids: Vec<usize>,
    pub parent_ids: Vec<usize>,
    /// Masked positions, ascending.
    pub positions: Vec<usize>,
}

impl MaskedTokens {
    pub fn unmasked(tokens: &TokenSequence) -> Self {
        MaskedTokens {
            word_ids: tokens.word_ids.clone(),
            object_ids: tokens.object_ids.clone(),
            parent_ids: tokens.parent_ids.clone(),
            positions: Vec::new(),
        }
    }
}

/// Each non-special token is masked independently with probability `rate`.
/// A masked token shows MASK as its word and 0 as object and parent id;
/// its type and relationship ids stay visible.
pub fn mask_tokens(tokens: &TokenSequence, rate: f64, seed: u64) -> MaskedTokens {
    let mut out = MaskedTokens::unmasked(tokens);
    if rate <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..tokens.len() {
        if tokens.type_ids[t] == TYPE_SPECIAL {
            continue;
        }
        if rng.random::<f64>() < rate {
            out.word_ids[t] = MASK;
            out.object_ids[t] = 0;
            out.parent_ids[t] = 0;
            out.positions.push(t);
        }
    }
    out
}

pub struct PredictorOutput {
    /// `T × d_model` contextual features.
    pub f: Var,
    /// `T × 2` predicted (w, h).
    pub s: Var,
    /// `T × 2` predicted (x, y), or (Δx, Δy) on predicate tokens.
    pub p: Var,
    /// Reconstruction logits for the word, object, type and parent streams.
    pub recon: [Var; 4],
}

#[derive(Clone, Debug)]
pub struct Predictor {
    pub word: Embedding,
    pub object: Embedding,
    pub relation: Embedding,
    pub kind: Embedding,
    pub parent: Embedding,
    pub project: Linear,
    pub layers: Vec<EncoderLayer>,
    pub norm: LayerNorm,
    pub size_head: Linear,
    pub position_head: Linear,
    pub recon_heads: [Linear; 4],
    pub max_seq_len: usize,
}

impl Predictor {
    pub fn new(store: &mut ParamStore, init: &mut Init, cfg: &ModelConfig) -> Self {
        let e = cfg.embed_dim;
        let d = cfg.d_model;
        let recon = |store: &mut ParamStore, init: &mut Init, name: &str, vocab: usize| {
            Linear::new(store, init, &format!("predictor.recon.{name}"), d, vocab)
        };
        Predictor {
            word: Embedding::new(store, init, "predictor.embed.word", cfg.word_vocab(), e),
            object: Embedding::new(store, init, "predictor.embed.object", cfg.object_vocab(), e),
            relation: Embedding::new(
                store,
                init,
                "predictor.embed.relation",
                cfg.relation_vocab(),
                e,
            ),
            kind: Embedding::new(store, init, "predictor.embed.type", cfg.type_vocab(), e),
            parent: Embedding::new(store, init, "predictor.embed.parent", cfg.object_vocab(), e),
            project: Linear::new(store, init, "predictor.project", 5 * e, d),
            layers: (0..cfg.n_encoder_layers)
                .map(|i| {
                    EncoderLayer::new(
                        store,
                        init,
                        &format!("predictor.layer{i}"),
                        d,
                        cfg.n_heads,
                        cfg.ffn_dim,
                        cfg.dropout,
                    )
                })
                .collect(),
            norm: LayerNorm::new(store, "predictor.norm", d),
            size_head: Linear::new(store, init, "predictor.size", d, 2),
            position_head: Linear::new(store, init, "predictor.position", d, 2),
            recon_heads: [
                recon(store, init, "word", cfg.word_vocab()),
                recon(store, init, "object", cfg.object_vocab()),
                recon(store, init, "type", cfg.type_vocab()),
                recon(store, init, "parent", cfg.object_vocab()),
            ],
            max_seq_len: cfg.max_seq_len,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        tokens: &TokenSequence,
        masked: &MaskedTokens,
    ) -> Result<PredictorOutput> {
        if tokens.len() > self.max_seq_len {
            return Err(Error::SequenceTooLong {
                what: "tokens",
                len: tokens.len(),
                max: self.max_seq_len,
            });
        }
        let parts = [
            self.word.forward(g, &masked.word_ids)?,
            self.object.forward(g, &masked.object_ids)?,
            self.relation.forward(g, &tokens.relationship_ids)?,
            self.kind.forward(g, &tokens.type_ids)?,
            self.parent.forward(g, &masked.parent_ids)?,
        ];
        let e = g.concat_cols(&parts)?;
        let mut x = self.project.forward(g, e)?;
        for layer in &self.layers {
            x = layer.forward(g, x, None)?;
        }
        let f = self.norm.forward(g, x)?;
        let s = self.size_head.forward(g, f)?;
        let p = self.position_head.forward(g, f)?;
        let recon = [
            self.recon_heads[0].forward(g, f)?,
            self.recon_heads[1].forward(g, f)?,
            self.recon_heads[2].forward(g, f)?,
            self.recon_heads[3].forward(g, f)?,
        ];
        Ok(PredictorOutput { f, s, p, recon })
    }
}

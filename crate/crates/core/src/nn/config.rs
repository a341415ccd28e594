use serde::{Deserialize, Serialize};

use crate::ag::{TYPE_VOCAB, WORD_VOCAB};
use crate::error::{Error, Result};

/// Architecture hyperparameters shared by all three stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub ffn_dim: usize,
    /// Mixture components per GMM head.
    pub mixtures: usize,
    /// Width of each of the five token embeddings before projection.
    pub embed_dim: usize,
    pub max_seq_len: usize,
    /// Largest number of distinct components in one graph.
    pub max_objects: usize,
    pub dropout: f64,
    pub mask_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 2,
            n_encoder_layers: 2,
            n_decoder_layers: 2,
            ffn_dim: 128,
            mixtures: 5,
            embed_dim: 16,
            max_seq_len: 160,
            max_objects: 64,
            dropout: 0.1,
            mask_rate: 0.15,
        }
    }
}

impl ModelConfig {
    pub fn word_vocab(&self) -> usize {
        WORD_VOCAB
    }

    pub fn type_vocab(&self) -> usize {
        TYPE_VOCAB
    }

    /// Object and parent ids: 0 for "none/ROOT" plus one per component.
    pub fn object_vocab(&self) -> usize {
        self.max_objects + 1
    }

    /// Relationship ids: 0 for CLS plus one per triplet that fits.
    pub fn relation_vocab(&self) -> usize {
        self.max_triplets() + 1
    }

    pub fn max_triplets(&self) -> usize {
        self.max_seq_len / 4
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return fail("d_model must be a positive multiple of n_heads");
        }
        if self.mixtures == 0 {
            return fail("mixtures must be at least 1");
        }
        if self.ffn_dim == 0 || self.embed_dim == 0 {
            return fail("ffn_dim and embed_dim must be positive");
        }
        if self.max_seq_len < 4 || self.max_objects == 0 {
            return fail("max_seq_len must be at least 4 and max_objects positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return fail("mask_rate must be in [0, 1]");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.object_vocab(), 65);
        assert_eq!(c.relation_vocab(), 41);
    }

    #[test]
    fn rejects_bad_heads() {
        let c = ModelConfig {
            n_heads: 3,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ModelConfig {
            mixtures: 0,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ModelConfig = serde_json::from_str(r#"{"d_model": 32}"#).unwrap();
        assert_eq!(c.d_model, 32);
        assert_eq!(c.mixtures, 5);
        assert!(serde_json::from_str::<ModelConfig>(r#"{"dmodel": 32}"#).is_err());
    }
}

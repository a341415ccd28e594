//! The three-stage layout model: predictor, mixture-density generator and
//! co-attention refiner, with their losses, training loop and sampler.

pub mod example;
pub mod generate;
pub mod generator;
pub mod gmm;
pub mod losses;
pub mod predictor;
pub mod refiner;
pub mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::ag::{GuiAg, SequenceLimits};
use crate::error::Result;
use crate::nn::checkpoint::{load_into, read_checkpoint, write_checkpoint};
use crate::nn::{Init, ModelConfig, ParamStore};

pub use example::{Example, Structure, TokenKind};
pub use generate::{generate_layouts, GenerateOptions};
pub use generator::{Generator, GeneratorOutput};
pub use gmm::{GmmParams, Mixture2};
pub use losses::{LossReport, LossWeights};
pub use predictor::{Predictor, PredictorOutput};
pub use refiner::Refiner;
pub use train::{OptimConfig, Trainer};

/// Architecture plus parameters. The modules only hold parameter ids; the
/// values live in `store`.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub predictor: Predictor,
    pub generator: Generator,
    pub refiner: Refiner,
}

impl Model {
    /// Fresh model; equal seeds give identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init::new(seed);
        let predictor = Predictor::new(&mut store, &mut init, &config);
        let generator = Generator::new(&mut store, &mut init, &config);
        let refiner = Refiner::new(&mut store, &mut init, &config);
        Ok(Model {
            config,
            store,
            predictor,
            generator,
            refiner,
        })
    }

    pub fn limits(&self) -> SequenceLimits {
        SequenceLimits::from(&self.config)
    }

    pub fn example(&self, ag: &GuiAg) -> Result<Example> {
        Example::new(ag, self.limits())
    }

    pub fn structure(&self, ag: &GuiAg) -> Result<Structure> {
        Structure::new(ag, self.limits())
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        write_checkpoint(w, &self.config, &self.store)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let (header, tensors) = read_checkpoint(r)?;
        let mut model = Model::new(header.config, 0)?;
        load_into(&mut model.store, tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = File::create(path)?;
        self.write_to(BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = File::open(path)?;
        Model::read_from(BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            ffn_dim: 24,
            embed_dim: 4,
            mixtures: 2,
            n_encoder_layers: 1,
            n_decoder_layers: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn equal_seeds_equal_parameters() {
        let a = Model::new(small(), 3).unwrap();
        let b = Model::new(small(), 3).unwrap();
        let c = Model::new(small(), 4).unwrap();
        assert_eq!(a.store, b.store);
        assert_ne!(a.store, c.store);
    }

    #[test]
    fn checkpoint_round_trip() {
        let a = Model::new(small(), 9).unwrap();
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        let b = Model::read_from(buf.as_slice()).unwrap();
        assert_eq!(a.config, b.config);
        assert_eq!(a.store, b.store);
    }

    #[test]
    fn corrupt_checkpoint_rejected() {
        let a = Model::new(small(), 9).unwrap();
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(Model::read_from(buf.as_slice()).is_err());
        let mut buf2 = Vec::new();
        a.write_to(&mut buf2).unwrap();
        buf2.truncate(buf2.len() - 8);
        assert!(Model::read_from(buf2.as_slice()).is_err());
    }
}

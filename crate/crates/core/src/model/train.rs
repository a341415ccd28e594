//! Joint training of the three stages.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, SynthSpec};
use crate::error::{Error, Result};
use crate::nn::{
    grad_check_params, Adam, GradCheckReport, Graph, ModelConfig, ParamGrads, ParamStore,
};

use super::example::Example;
use super::losses::{example_losses, LossReport, LossWeights};
use super::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

/// Training configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub optim: OptimConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Dataset directory (`screens/*.json` + `meta.csv`); its `train` split
    /// is used.
    pub data: Option<PathBuf>,
    /// Synthetic corpus used when `data` is absent.
    pub synth: Option<SynthSpec>,
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            optim: OptimConfig::default(),
            steps: 500,
            batch_size: 16,
            seed: 0,
            data: None,
            synth: None,
            checkpoint: PathBuf::from("model.ckpt"),
            loss_csv: PathBuf::from("losses.csv"),
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let mut cfg: TrainConfig = serde_json::from_str(&text)?;
        // Relative paths are resolved against the config file's directory.
        if let Some(dir) = path.as_ref().parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            if let Some(d) = cfg.data.as_mut() {
                fix(d);
            }
            fix(&mut cfg.checkpoint);
            fix(&mut cfg.loss_csv);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.optim.lr.is_finite() && self.optim.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.data.is_none() && self.synth.is_none() {
            return Err(Error::Config("either `data` or `synth` must be set".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent per-example seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Randomness used by one training forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PassSeeds {
    pub mask: u64,
    pub dropout: u64,
}

impl PassSeeds {
    pub fn derive(seed: u64, step: u64, index: u64) -> Self {
        let base = mix_seed(mix_seed(seed, step), index);
        PassSeeds {
            mask: mix_seed(base, 1),
            dropout: mix_seed(base, 2),
        }
    }
}

/// Loss of one example evaluated against `store`. With `seeds` the pass
/// uses masking and dropout; without, it is deterministic and unmasked.
pub fn example_loss(
    model: &Model,
    store: &ParamStore,
    ex: &Example,
    weights: &LossWeights,
    seeds: Option<PassSeeds>,
    want_grad: bool,
) -> Result<(LossReport, Option<ParamGrads>)> {
    let (mut g, mask_seed, rate) = match seeds {
        Some(s) => (
            Graph::training(store, s.dropout),
            s.mask,
            model.config.mask_rate,
        ),
        None => (Graph::new(store), 0, 0.0),
    };
    let vars = example_losses(model, &mut g, ex, mask_seed, rate, weights)?;
    let report = vars.report(&g);
    if !want_grad {
        return Ok((report, None));
    }
    let grads = g.backward(vars.total)?;
    let mut out = ParamGrads::zeros_like(store);
    grads.accumulate_params(&g, &mut out, 1.0);
    Ok((report, Some(out)))
}

/// Mean loss and gradient over a batch, accumulated in batch order.
pub fn batch_loss(
    model: &Model,
    store: &ParamStore,
    batch: &[&Example],
    weights: &LossWeights,
    seeds: &[Option<PassSeeds>],
    want_grad: bool,
) -> Result<(LossReport, Option<ParamGrads>)> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut report = LossReport::default();
    let mut grads = want_grad.then(|| ParamGrads::zeros_like(store));
    for (ex, s) in batch.iter().zip(seeds) {
        let (r, g) = example_loss(model, store, ex, weights, *s, want_grad)?;
        report.add_scaled(&r, scale);
        if let (Some(acc), Some(g)) = (grads.as_mut(), g) {
            acc.add_scaled(&g, scale);
        }
    }
    Ok((report, grads))
}

/// Central-difference check of the batch's total loss against backprop,
/// probing up to `per_group` elements of every parameter tensor.
#[allow(clippy::too_many_arguments)]
pub fn check_total_gradients(
    model: &Model,
    batch: &[&Example],
    weights: &LossWeights,
    seeds: &[Option<PassSeeds>],
    per_group: usize,
    step: f64,
    tol: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    grad_check_params(
        &model.store,
        |store, want| {
            let (r, g) = batch_loss(model, store, batch, weights, seeds, want)?;
            Ok((r.total, g))
        },
        per_group,
        step,
        tol,
        seed,
    )
}

pub struct Trainer {
    pub model: Model,
    pub weights: LossWeights,
    pub optim: OptimConfig,
    pub seed: u64,
    adam: Adam,
    order: Vec<usize>,
    cursor: usize,
    shuffle_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: Model, weights: LossWeights, optim: OptimConfig, seed: u64) -> Self {
        let adam = Adam::new(&model.store, optim.lr, optim.beta1, optim.beta2, optim.eps);
        Trainer {
            model,
            weights,
            optim,
            seed,
            adam,
            order: Vec::new(),
            cursor: 0,
            shuffle_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5EED)),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.adam.steps_taken()
    }

    /// One Adam update on the mean joint loss of `batch`.
    pub fn train_step(&mut self, batch: &[&Example]) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let step = self.adam.steps_taken();
        let seeds: Vec<Option<PassSeeds>> = (0..batch.len())
            .map(|i| Some(PassSeeds::derive(self.seed, step, i as u64)))
            .collect();
        let (report, grads) = batch_loss(
            &self.model,
            &self.model.store,
            batch,
            &self.weights,
            &seeds,
            true,
        )?;
        let mut grads = grads.expect("gradients requested");
        if !report.is_finite() || !grads.is_finite() {
            return Err(Error::Config(format!(
                "non-finite loss or gradient at step {step}"
            )));
        }
        if let Some(max) = self.optim.clip_norm {
            let norm = grads.global_norm();
            if norm > max {
                grads.scale(max / norm);
            }
        }
        self.adam.step(&mut self.model.store, &grads);
        Ok(report)
    }

    /// Next mini-batch indices: epochs of seeded shuffles of `0..n`.
    pub fn next_batch(&mut self, n: usize, batch_size: usize) -> Vec<usize> {
        if self.order.len() != n {
            self.order = (0..n).collect();
            self.cursor = n;
        }
        let size = batch_size.min(n);
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor >= n {
                self.order.shuffle(&mut self.shuffle_rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    /// Runs `steps` updates over `examples`, calling `on_step` after each.
    pub fn fit(
        &mut self,
        examples: &[Example],
        steps: usize,
        batch_size: usize,
        mut on_step: impl FnMut(u64, &LossReport),
    ) -> Result<Vec<LossReport>> {
        if examples.is_empty() {
            return Err(Error::Config("no training examples".into()));
        }
        let mut history = Vec::with_capacity(steps);
        for _ in 0..steps {
            let idx = self.next_batch(examples.len(), batch_size);
            let batch: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            let report = self.train_step(&batch)?;
            on_step(self.steps_taken(), &report);
            history.push(report);
        }
        Ok(history)
    }
}

/// Writes one row per step: `step,pred,box,kl,rel,reg,cc,cp,total`.
pub fn write_loss_csv(path: impl AsRef<Path>, history: &[LossReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step"];
    header.extend(LossReport::FIELDS);
    w.write_record(&header)?;
    for (i, r) in history.iter().enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(r.values().iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Training examples described by a config: the dataset's train split, or
/// a synthetic corpus.
pub fn load_training_examples(
    cfg: &TrainConfig,
    limits: crate::ag::SequenceLimits,
) -> Result<Vec<Example>> {
    let records = match (&cfg.data, &cfg.synth) {
        (Some(dir), _) => corpus::load_dataset(dir)?
            .into_iter()
            .filter(|r| r.split == corpus::Split::Train)
            .collect(),
        (None, Some(spec)) => corpus::synth_corpus(spec.count, spec.seed, &spec.grammar),
        (None, None) => return Err(Error::Config("either `data` or `synth` must be set".into())),
    };
    corpus::examples_from_records(&records, limits, cfg.seed)
}

/// Full training run per `cfg`: trains, then writes the checkpoint and the
/// loss CSV. Returns the trained model and per-step losses.
pub fn run_training(
    cfg: &TrainConfig,
    mut on_step: impl FnMut(u64, &LossReport),
) -> Result<(Model, Vec<LossReport>)> {
    cfg.validate()?;
    let model = Model::new(cfg.model.clone(), cfg.seed)?;
    let examples = load_training_examples(cfg, model.limits())?;
    log::info!(
        "training on {} graphs for {} steps",
        examples.len(),
        cfg.steps
    );
    let mut trainer = Trainer::new(model, cfg.weights, cfg.optim.clone(), cfg.seed);
    let history = trainer.fit(&examples, cfg.steps, cfg.batch_size, |s, r| on_step(s, r))?;
    trainer.model.save(&cfg.checkpoint)?;
    write_loss_csv(&cfg.loss_csv, &history)?;
    Ok((trainer.model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ag::build_gui_ag;
    use crate::corpus::{synth_corpus, SynthConfig};

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            ffn_dim: 32,
            embed_dim: 4,
            mixtures: 2,
            n_encoder_layers: 1,
            n_decoder_layers: 1,
            ..ModelConfig::default()
        }
    }

    fn examples(n: usize, model: &Model) -> Vec<Example> {
        synth_corpus(n, 11, &SynthConfig::default())
            .iter()
            .enumerate()
            .map(|(i, r)| {
                model
                    .example(&build_gui_ag(&r.layout, i as u64).unwrap())
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn loss_decreases_on_fixed_batch() {
        let model = Model::new(tiny_config(), 1).unwrap();
        let exs = examples(2, &model);
        let mut tr = Trainer::new(model, LossWeights::default(), OptimConfig::default(), 5);
        let batch: Vec<&Example> = exs.iter().collect();
        let first = tr.train_step(&batch).unwrap().total;
        let mut last = first;
        for _ in 0..49 {
            last = tr.train_step(&batch).unwrap().total;
        }
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let run = || {
            let model = Model::new(tiny_config(), 2).unwrap();
            let exs = examples(3, &model);
            let mut tr = Trainer::new(model, LossWeights::default(), OptimConfig::default(), 8);
            tr.fit(&exs, 3, 2, |_, _| {}).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn batches_cover_each_epoch() {
        let model = Model::new(tiny_config(), 2).unwrap();
        let mut tr = Trainer::new(model, LossWeights::default(), OptimConfig::default(), 8);
        let mut seen: Vec<usize> = (0..3).flat_map(|_| tr.next_batch(6, 2)).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn config_requires_data_source() {
        let cfg = TrainConfig::default();
        assert!(cfg.validate().is_err());
        let cfg: TrainConfig =
            serde_json::from_str(r#"{"synth": {"count": 4}, "steps": 2}"#).unwrap();
        cfg.validate().unwrap();
        assert!(serde_json::from_str::<TrainConfig>(r#"{"stepz": 2}"#).is_err());
    }
}

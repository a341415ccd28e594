//! Layout sampling from a trained model.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ag::GuiAg;
use crate::error::{Error, Result};
use crate::layout::{BBox, Layout, ROOT_ID};
use crate::nn::{Graph, Tensor};

use super::example::{Structure, TokenKind};
use super::generator::shifted_boxes;
use super::gmm::{destandardize, Mixture2};
use super::predictor::MaskedTokens;
use super::Model;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub samples: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            samples: 1,
            temperature: 0.0,
            seed: 0,
        }
    }
}

/// Predictor outputs for one graph, computed once and shared by samples.
pub struct Encoded {
    pub structure: Structure,
    pub f: Tensor,
    pub s: Tensor,
    pub p: Tensor,
}

/// Intermediate values of one sample.
#[derive(Clone, Debug)]
pub struct Trace {
    /// Layout-aware features of the final decoding pass.
    pub c: Tensor,
    /// Sampled box per token, normalized units.
    pub sampled: Vec<[f64; 4]>,
    /// Refined box per token.
    pub refined: Vec<[f64; 4]>,
    pub layout: Layout,
}

pub fn encode(model: &Model, ag: &GuiAg) -> Result<Encoded> {
    let structure = model.structure(ag)?;
    let mut g = Graph::new(&model.store);
    let out = model.predictor.forward(
        &mut g,
        &structure.tokens,
        &MaskedTokens::unmasked(&structure.tokens),
    )?;
    Ok(Encoded {
        f: g.value(out.f).clone(),
        s: g.value(out.s).clone(),
        p: g.value(out.p).clone(),
        structure,
    })
}

fn sample_step(
    kind: TokenKind,
    pos: &Mixture2,
    size: &Mixture2,
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> [f64; 4] {
    match kind {
        TokenKind::Special => [0.0; 4],
        TokenKind::Predicate => {
            let d = pos.sample(temperature, rng);
            [0.5 * d[0], 0.5 * d[1], 0.0, 0.0]
        }
        TokenKind::Component(_) => {
            let xy = pos.sample(temperature, rng);
            let wh = size.sample(temperature, rng);
            [
                destandardize(xy[0]),
                destandardize(xy[1]),
                destandardize(wh[0]).max(0.0),
                destandardize(wh[1]).max(0.0),
            ]
        }
    }
}

/// Draws one layout. Each decoding step reruns the generator on the prefix
/// so far, samples that step's box, and feeds it to the next step.
pub fn sample_one(
    model: &Model,
    enc: &Encoded,
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trace> {
    let st = &enc.structure;
    let len = st.len();
    let k = model.config.mixtures;
    let mut sampled = vec![[0.0; 4]; len];
    let mut c = None;
    for t in 0..len {
        let prev = shifted_boxes(st, &sampled, t + 1);
        let mut g = Graph::new(&model.store);
        let f = g.constant(enc.f.clone());
        let s = g.constant(enc.s.clone());
        let p = g.constant(enc.p.clone());
        let out = model.generator.forward(&mut g, f, s, p, &prev)?;
        let pos = Mixture2::from_raw(g.value(out.position).row(t), k)?;
        let size = Mixture2::from_raw(g.value(out.size).row(t), k)?;
        sampled[t] = sample_step(st.kinds[t], &pos, &size, temperature, rng);
        if t + 1 == len {
            // Row t of the last pass saw every earlier sample, and causality
            // keeps rows < t unchanged from their own passes.
            c = Some(g.value(out.c).clone());
        }
    }
    let c = c.ok_or(Error::NoComponents)?;

    let mut g = Graph::new(&model.store);
    let cv = g.constant(c.clone());
    let bv = g.constant(Tensor::from_rows(&sampled)?);
    let refined_v = model.refiner.forward(&mut g, cv, bv)?;
    let refined_t = g.value(refined_v);
    let refined: Vec<[f64; 4]> = (0..len)
        .map(|r| {
            let row = refined_t.row(r);
            [row[0], row[1], row[2], row[3]]
        })
        .collect();

    let layout = assemble_layout(st, &refined);
    Ok(Trace {
        c,
        sampled,
        refined,
        layout,
    })
}

/// Averages each component's refined token boxes; components with no
/// tokens inherit their parent's box (the screen under ROOT). Everything is
/// clamped to the screen.
pub fn assemble_layout(st: &Structure, refined: &[[f64; 4]]) -> Layout {
    let mut boxes: BTreeMap<u32, BBox> = BTreeMap::new();
    for (k, occ) in st.occurrences.iter().enumerate() {
        if occ.is_empty() {
            continue;
        }
        let mut acc = [0.0; 4];
        for &r in occ {
            for d in 0..4 {
                acc[d] += refined[r][d];
            }
        }
        let n = occ.len() as f64;
        let b = BBox::from_array(acc.map(|v| v / n));
        boxes.insert(st.components[k], b.clamp_to_screen());
    }
    let mut layout = Layout::default();
    for comp in &st.ag.components {
        let bbox = resolve_box(&st.ag, comp.id, &boxes);
        layout.insert(comp.id, comp.class, bbox, st.ag.parent(comp.id));
    }
    layout
}

fn resolve_box(ag: &GuiAg, id: u32, boxes: &BTreeMap<u32, BBox>) -> BBox {
    let mut cur = id;
    for _ in 0..=ag.components.len() {
        if cur == ROOT_ID {
            break;
        }
        if let Some(b) = boxes.get(&cur) {
            return *b;
        }
        cur = ag.parent(cur);
    }
    BBox::SCREEN
}

/// Sample `i` uses stream `i` of a ChaCha generator keyed by `seed`, so
/// samples are independent of how many are requested.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn generate_traces(model: &Model, ag: &GuiAg, opts: &GenerateOptions) -> Result<Vec<Trace>> {
    if !(opts.temperature.is_finite() && opts.temperature >= 0.0) {
        return Err(Error::Config(
            "temperature must be a finite value ≥ 0".into(),
        ));
    }
    let enc = encode(model, ag)?;
    (0..opts.samples)
        .map(|i| {
            sample_one(
                model,
                &enc,
                opts.temperature,
                &mut sample_rng(opts.seed, i as u64),
            )
        })
        .collect()
}

pub fn generate_layouts(model: &Model, ag: &GuiAg, opts: &GenerateOptions) -> Result<Vec<Layout>> {
    Ok(generate_traces(model, ag, opts)?
        .into_iter()
        .map(|t| t.layout)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ag::build_gui_ag;
    use crate::corpus::{synth_corpus, SynthConfig};
    use crate::nn::ModelConfig;

    fn setup() -> (Model, GuiAg) {
        let cfg = ModelConfig {
            d_model: 16,
            ffn_dim: 32,
            embed_dim: 4,
            mixtures: 3,
            n_encoder_layers: 1,
            n_decoder_layers: 2,
            ..ModelConfig::default()
        };
        let model = Model::new(cfg, 4).unwrap();
        let screen = &synth_corpus(1, 21, &SynthConfig::default())[0];
        let ag = build_gui_ag(&screen.layout, 0).unwrap();
        (model, ag)
    }

    #[test]
    fn reproducible_samples() {
        let (model, ag) = setup();
        let opts = GenerateOptions {
            samples: 3,
            temperature: 1.0,
            seed: 17,
        };
        let a = generate_layouts(&model, &ag, &opts).unwrap();
        let b = generate_layouts(&model, &ag, &opts).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        // Sample i does not depend on how many samples were requested.
        let one = generate_layouts(&model, &ag, &GenerateOptions { samples: 1, ..opts }).unwrap();
        assert_eq!(one[0], a[0]);
    }

    #[test]
    fn zero_temperature_is_deterministic_and_clamped() {
        let (model, ag) = setup();
        let opts = GenerateOptions {
            samples: 2,
            temperature: 0.0,
            seed: 1,
        };
        let out = generate_layouts(&model, &ag, &opts).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(out[0].len(), ag.components.len());
        for c in out[0].components.values() {
            let b = c.bbox;
            assert!(b.x >= 0.0 && b.y >= 0.0 && b.w >= 0.0 && b.h >= 0.0);
            assert!(b.right() <= 1.0 + 1e-12 && b.bottom() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn teacher_forcing_reproduces_sampled_path() {
        let (model, ag) = setup();
        let enc = encode(&model, &ag).unwrap();
        let trace = sample_one(&model, &enc, 0.0, &mut sample_rng(0, 0)).unwrap();
        let st = &enc.structure;
        let prev = shifted_boxes(st, &trace.sampled, st.len());
        let mut g = Graph::new(&model.store);
        let f = g.constant(enc.f.clone());
        let s = g.constant(enc.s.clone());
        let p = g.constant(enc.p.clone());
        let out = model.generator.forward(&mut g, f, s, p, &prev).unwrap();
        assert_eq!(g.value(out.c), &trace.c);
        // Every earlier prefix pass agrees with the full pass on its rows.
        for t in [0, st.len() / 2] {
            let prev_t = shifted_boxes(st, &trace.sampled, t + 1);
            let mut h = Graph::new(&model.store);
            let f = h.constant(enc.f.clone());
            let s = h.constant(enc.s.clone());
            let p = h.constant(enc.p.clone());
            let o = model.generator.forward(&mut h, f, s, p, &prev_t).unwrap();
            for r in 0..=t {
                assert_eq!(h.value(o.c).row(r), trace.c.row(r));
            }
        }
    }

    #[test]
    fn fresh_refiner_is_identity_and_single_occurrence_keeps_box() {
        let (model, ag) = setup();
        let enc = encode(&model, &ag).unwrap();
        let trace = sample_one(&model, &enc, 0.7, &mut sample_rng(3, 0)).unwrap();
        assert_eq!(trace.sampled, trace.refined);
        let st = &enc.structure;
        for (k, occ) in st.occurrences.iter().enumerate() {
            if occ.len() == 1 {
                let expect = BBox::from_array(trace.refined[occ[0]]).clamp_to_screen();
                assert_eq!(trace.layout.bbox(st.components[k]).unwrap(), expect);
            }
        }
    }

    #[test]
    fn tokenless_component_inherits_parent() {
        let (model, _) = setup();
        let ag =
            GuiAg::from_json_str(r#"{"components":[{"id":1,"class":"BUTTON"}],"relations":[]}"#)
                .unwrap();
        let out = generate_layouts(&model, &ag, &GenerateOptions::default()).unwrap();
        assert_eq!(out[0].bbox(1).unwrap(), BBox::SCREEN);
    }
}

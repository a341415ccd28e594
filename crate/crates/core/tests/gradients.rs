use guilget_core::ag::build_gui_ag;
use guilget_core::layout::{BBox, ComponentClass, LayoutNode, LayoutTree};
use guilget_core::model::train::{check_total_gradients, PassSeeds};
use guilget_core::model::{Example, LossWeights, Model};
use guilget_core::nn::{Init, ModelConfig};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-3;

fn config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        ffn_dim: 12,
        embed_dim: 3,
        mixtures: 2,
        n_encoder_layers: 1,
        n_decoder_layers: 1,
        mask_rate: 0.5,
        ..ModelConfig::default()
    }
}

/// A container with two children: one `inside` triplet plus one
/// directional triplet.
fn screen(shift: f64) -> LayoutTree {
    let children = vec![
        LayoutNode::leaf(
            2,
            ComponentClass::Button,
            BBox::new(0.12 + shift, 0.21, 0.31, 0.17),
        ),
        LayoutNode::leaf(
            3,
            ComponentClass::Text,
            BBox::new(0.55, 0.43 + shift, 0.27, 0.12),
        ),
    ];
    LayoutTree::new(
        format!("grad-{shift}"),
        vec![
            LayoutNode::leaf(1, ComponentClass::Container, BBox::new(0.05, 0.1, 0.9, 0.7))
                .with_children(children),
        ],
    )
}

fn model_with_live_refiner(seed: u64) -> Model {
    let mut model = Model::new(config(), seed).unwrap();
    let mut init = Init::new(seed + 100);
    for id in [model.refiner.out.weight, model.refiner.out.bias] {
        let (r, c) = model.store.get(id).dims();
        *model.store.get_mut(id) = init.normal(r, c, 0.05);
    }
    model
}

#[test]
fn total_loss_gradients_match_finite_differences() {
    let model = model_with_live_refiner(3);
    let examples: Vec<Example> = [0.0, 0.03]
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let ag = build_gui_ag(&screen(s), i as u64).unwrap();
            assert_eq!(ag.triplets.len(), 2);
            model.example(&ag).unwrap()
        })
        .collect();
    let batch: Vec<&Example> = examples.iter().collect();
    let seeds: Vec<Option<PassSeeds>> = (0..2).map(|i| Some(PassSeeds::derive(7, 0, i))).collect();
    let report = check_total_gradients(
        &model,
        &batch,
        &LossWeights::default(),
        &seeds,
        6,
        STEP,
        TOL,
        11,
    )
    .unwrap();
    let bad: Vec<_> = report.groups.iter().filter(|(_, e)| *e > TOL).collect();
    assert!(report.passed(), "groups over tolerance: {bad:?}");
    assert_eq!(report.groups.len(), model.store.len());
}

#[test]
fn every_parameter_group_receives_gradient() {
    let model = model_with_live_refiner(4);
    let ag = build_gui_ag(&screen(0.0), 0).unwrap();
    let ex = model.example(&ag).unwrap();
    let (_, grads) = guilget_core::model::train::example_loss(
        &model,
        &model.store,
        &ex,
        &LossWeights::default(),
        Some(PassSeeds::derive(1, 0, 0)),
        true,
    )
    .unwrap();
    let grads = grads.unwrap();
    let dead: Vec<&str> = model
        .store
        .iter()
        .filter(|(id, _, _)| grads.get(*id).iter().all(|g| *g == 0.0))
        .map(|(_, name, _)| name)
        .collect();
    // Rows of unused vocabulary entries are zero, but no whole tensor is.
    assert!(dead.is_empty(), "no gradient reaches {dead:?}");
}

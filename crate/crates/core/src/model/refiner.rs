//! Co-attention refiner. The semantic stream (decoder features) and the box
//! stream (embedded boxes) attend to each other; the fused result predicts a
//! residual added to the boxes.

use crate::error::{Error, Result};
use crate::nn::layers::{LayerNorm, Linear, MultiHeadAttention};
use crate::nn::{Graph, Init, ModelConfig, ParamStore, Var};

#[derive(Clone, Debug)]
pub struct Refiner {
    pub box_in: Linear,
    pub box_hidden: Linear,
    pub norm_sem: LayerNorm,
    pub norm_box: LayerNorm,
    pub sem_to_box: MultiHeadAttention,
    pub box_to_sem: MultiHeadAttention,
    pub fuse: Linear,
    /// Zero at initialization, so a fresh refiner is the identity.
    pub out: Linear,
}

impl Refiner {
    pub fn new(store: &mut ParamStore, init: &mut Init, cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        Refiner {
            box_in: Linear::new(store, init, "refiner.box_in", 4, d),
            box_hidden: Linear::new(store, init, "refiner.box_hidden", d, d),
            norm_sem: LayerNorm::new(store, "refiner.norm_sem", d),
            norm_box: LayerNorm::new(store, "refiner.norm_box", d),
            sem_to_box: MultiHeadAttention::new(store, init, "refiner.sem_to_box", d, cfg.n_heads),
            box_to_sem: MultiHeadAttention::new(store, init, "refiner.box_to_sem", d, cfg.n_heads),
            fuse: Linear::new(store, init, "refiner.fuse", 2 * d, cfg.ffn_dim),
            out: Linear::zeros(store, "refiner.out", cfg.ffn_dim, 4),
        }
    }

    /// `c` is `T × d_model`, `boxes` is `T × 4` in normalized units; returns
    /// refined `T × 4` boxes.
    pub fn forward(&self, g: &mut Graph<'_>, c: Var, boxes: Var) -> Result<Var> {
        if g.value(c).rows() != g.value(boxes).rows() || g.value(boxes).cols() != 4 {
            return Err(Error::shape("refiner", g.shape(c), g.shape(boxes)));
        }
        let h = self.box_in.forward(g, boxes)?;
        let h = g.relu(h);
        let bx = self.box_hidden.forward(g, h)?;

        let sem_n = self.norm_sem.forward(g, c)?;
        let box_n = self.norm_box.forward(g, bx)?;
        let sem_att = self.sem_to_box.forward(g, sem_n, box_n, None)?;
        let box_att = self.box_to_sem.forward(g, box_n, sem_n, None)?;
        let sem = g.add(c, sem_att)?;
        let bxs = g.add(bx, box_att)?;

        let fused = g.concat_cols(&[sem, bxs])?;
        let h = self.fuse.forward(g, fused)?;
        let h = g.relu(h);
        let delta = self.out.forward(g, h)?;
        g.add(boxes, delta)
    }
}

//! Training objectives of the three stages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, Tensor, Var};

use super::example::{Example, TokenKind};
use super::generator::shifted_boxes;
use super::gmm::{head_mean, head_terms, standardize};
use super::predictor::{mask_tokens, MaskedTokens, PredictorOutput};
use super::Model;

/// Smooth-L1 transition point, in normalized screen units.
pub const REGRESSION_BETA: f64 = 0.05;

/// Areas below this are treated as this value when dividing.
pub const AREA_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    #[serde(rename = "box")]
    pub box_nll: f64,
    pub kl: f64,
    pub rel: f64,
    pub reg: f64,
    pub cc: f64,
    pub cp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            box_nll: 1.0,
            kl: 0.1,
            rel: 1.0,
            reg: 1.0,
            cc: 0.5,
            cp: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.box_nll, self.kl, self.rel, self.reg, self.cc, self.cp];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn generator(&self, box_nll: f64, kl: f64, rel: f64) -> f64 {
        self.box_nll * box_nll + self.kl * kl + self.rel * rel
    }

    pub fn refiner(&self, reg: f64, cc: f64, cp: f64) -> f64 {
        self.reg * reg + self.cc * cc + self.cp * cp
    }
}

/// Loss components of one example or a batch average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub pred: f64,
    pub box_nll: f64,
    pub kl: f64,
    pub rel: f64,
    pub reg: f64,
    pub cc: f64,
    pub cp: f64,
    pub total: f64,
}

impl LossReport {
    pub const FIELDS: [&'static str; 8] = ["pred", "box", "kl", "rel", "reg", "cc", "cp", "total"];

    pub fn values(&self) -> [f64; 8] {
        [
            self.pred,
            self.box_nll,
            self.kl,
            self.rel,
            self.reg,
            self.cc,
            self.cp,
            self.total,
        ]
    }

    pub fn add_scaled(&mut self, o: &LossReport, s: f64) {
        self.pred += s * o.pred;
        self.box_nll += s * o.box_nll;
        self.kl += s * o.kl;
        self.rel += s * o.rel;
        self.reg += s * o.reg;
        self.cc += s * o.cc;
        self.cp += s * o.cp;
        self.total += s * o.total;
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Graph nodes of every loss term for one example.
pub struct LossVars {
    pub pred: Var,
    pub box_nll: Var,
    pub kl: Var,
    pub rel: Var,
    pub reg: Var,
    pub cc: Var,
    pub cp: Var,
    pub total: Var,
}

impl LossVars {
    pub fn report(&self, g: &Graph<'_>) -> LossReport {
        let v = |x: Var| g.value(x).item();
        LossReport {
            pred: v(self.pred),
            box_nll: v(self.box_nll),
            kl: v(self.kl),
            rel: v(self.rel),
            reg: v(self.reg),
            cc: v(self.cc),
            cp: v(self.cp),
            total: v(self.total),
        }
    }
}

fn zero(g: &mut Graph<'_>) -> Var {
    g.constant(Tensor::scalar(0.0))
}

fn rows_tensor(rows: &[usize], f: impl Fn(usize) -> Vec<f64>, cols: usize) -> Tensor {
    let data = rows.iter().flat_map(|&r| f(r)).collect();
    Tensor::matrix(rows.len(), cols, data).expect("row block")
}

/// Mean cross-entropy of `logits` rows at `positions`; 0 when empty.
pub fn masked_cross_entropy(
    g: &mut Graph<'_>,
    logits: Var,
    targets: &[usize],
    positions: &[usize],
) -> Result<Var> {
    if positions.is_empty() {
        return Ok(zero(g));
    }
    let rows = g.gather_rows(logits, positions)?;
    let t: Vec<usize> = positions.iter().map(|&p| targets[p]).collect();
    let ce = g.cross_entropy_rows(rows, &t)?;
    Ok(g.mean(ce))
}

/// Reconstruction loss averaged over the word, object, type and parent
/// streams at the masked positions.
pub fn semantic_loss(
    g: &mut Graph<'_>,
    out: &PredictorOutput,
    ex: &Example,
    masked: &MaskedTokens,
) -> Result<Var> {
    let tok = &ex.structure.tokens;
    let streams = [
        &tok.word_ids,
        &tok.object_ids,
        &tok.type_ids,
        &tok.parent_ids,
    ];
    let mut terms = Vec::with_capacity(4);
    for (logits, ids) in out.recon.iter().zip(streams) {
        terms.push(masked_cross_entropy(g, *logits, ids, &masked.positions)?);
    }
    let all = g.concat_rows(&terms)?;
    Ok(g.mean(all))
}

/// Smooth-L1 of the predictor's position/size outputs against ground truth:
/// components regress (x, y) and (w, h), predicates regress the top-left
/// offset of object minus subject.
pub fn predictor_box_loss(g: &mut Graph<'_>, out: &PredictorOutput, ex: &Example) -> Result<Var> {
    let st = &ex.structure;
    let pos_rows = st.non_special_rows();
    let comp_rows = st.component_rows();
    if pos_rows.is_empty() {
        return Ok(zero(g));
    }
    let p = g.gather_rows(out.p, &pos_rows)?;
    let pt = rows_tensor(&pos_rows, |r| ex.targets[r][..2].to_vec(), 2);
    let lp = g.smooth_l1(p, &pt, REGRESSION_BETA)?;
    let lp = g.mean(lp);
    let s = g.gather_rows(out.s, &comp_rows)?;
    let stt = rows_tensor(&comp_rows, |r| ex.targets[r][2..].to_vec(), 2);
    let ls = g.smooth_l1(s, &stt, REGRESSION_BETA)?;
    let ls = g.mean(ls);
    g.add(lp, ls)
}

/// Mean squared mismatch between each predicate's box and the offset of its
/// object from its subject, summed over x and y. `positions` is `T × 2` in
/// normalized units.
pub fn relation_consistency(
    g: &mut Graph<'_>,
    positions: Var,
    spans: &[[usize; 3]],
) -> Result<Var> {
    if spans.is_empty() {
        return Ok(zero(g));
    }
    let subj: Vec<usize> = spans.iter().map(|s| s[0]).collect();
    let pred: Vec<usize> = spans.iter().map(|s| s[1]).collect();
    let obj: Vec<usize> = spans.iter().map(|s| s[2]).collect();
    let s = g.gather_rows(positions, &subj)?;
    let p = g.gather_rows(positions, &pred)?;
    let o = g.gather_rows(positions, &obj)?;
    let d = g.sub(o, s)?;
    let e = g.sub(d, p)?;
    let e2 = g.square(e);
    let total = g.sum(e2);
    Ok(g.scale(total, 1.0 / spans.len() as f64))
}

/// Plain-number form of [`relation_consistency`].
pub fn relation_consistency_value(positions: &[[f64; 2]], spans: &[[usize; 3]]) -> f64 {
    if spans.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for s in spans {
        let (a, p, b) = (positions[s[0]], positions[s[1]], positions[s[2]]);
        for d in 0..2 {
            let e = (b[d] - a[d]) - p[d];
            total += e * e;
        }
    }
    total / spans.len() as f64
}

struct BoxCols {
    x: Var,
    y: Var,
    right: Var,
    bottom: Var,
    area: Var,
}

fn box_cols(g: &mut Graph<'_>, b: Var) -> Result<BoxCols> {
    let x = g.slice_cols(b, 0, 1)?;
    let y = g.slice_cols(b, 1, 1)?;
    let w = g.slice_cols(b, 2, 1)?;
    let w = g.relu(w);
    let h = g.slice_cols(b, 3, 1)?;
    let h = g.relu(h);
    let right = g.add(x, w)?;
    let bottom = g.add(y, h)?;
    let area = g.mul(w, h)?;
    Ok(BoxCols {
        x,
        y,
        right,
        bottom,
        area,
    })
}

fn intersection(g: &mut Graph<'_>, a: &BoxCols, b: &BoxCols) -> Result<Var> {
    let r = g.minimum(a.right, b.right)?;
    let l = g.maximum(a.x, b.x)?;
    let iw = g.sub(r, l)?;
    let iw = g.relu(iw);
    let bt = g.minimum(a.bottom, b.bottom)?;
    let t = g.maximum(a.y, b.y)?;
    let ih = g.sub(bt, t)?;
    let ih = g.relu(ih);
    g.mul(iw, ih)
}

/// `mean(mask · inter / max(denom, floor))` where the mask drops rows whose
/// denominator is zero.
fn masked_ratio_mean(g: &mut Graph<'_>, inter: Var, denom: Var, n: usize) -> Result<(Var, Var)> {
    let mask_data: Vec<f64> = g
        .value(denom)
        .data()
        .iter()
        .map(|&a| if a > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let mask = g.constant(Tensor::matrix(n, 1, mask_data)?);
    let floor = g.constant(Tensor::full(n, 1, AREA_FLOOR));
    let safe = g.maximum(denom, floor)?;
    let ratio = g.div(inter, safe)?;
    let ratio = g.mul(ratio, mask)?;
    Ok((ratio, mask))
}

/// Mean of `1 − |C ∩ P| / |C|` over (child, parent) rows of `boxes`.
pub fn child_parent_term(g: &mut Graph<'_>, boxes: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    if pairs.is_empty() {
        return Ok(zero(g));
    }
    let n = pairs.len();
    let c_idx: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let p_idx: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let cb = g.gather_rows(boxes, &c_idx)?;
    let pb = g.gather_rows(boxes, &p_idx)?;
    let c = box_cols(g, cb)?;
    let p = box_cols(g, pb)?;
    let inter = intersection(g, &c, &p)?;
    let (ratio, mask) = masked_ratio_mean(g, inter, c.area, n)?;
    // Zero-area children count as contained.
    let loss = g.sub(mask, ratio)?;
    let s = g.sum(loss);
    Ok(g.scale(s, 1.0 / n as f64))
}

/// Mean of `|A ∩ B| / min(|A|, |B|)` over sibling rows of `boxes`.
pub fn sibling_overlap_term(
    g: &mut Graph<'_>,
    boxes: Var,
    pairs: &[(usize, usize)],
) -> Result<Var> {
    if pairs.is_empty() {
        return Ok(zero(g));
    }
    let n = pairs.len();
    let a_idx: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let b_idx: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let ab = g.gather_rows(boxes, &a_idx)?;
    let bb = g.gather_rows(boxes, &b_idx)?;
    let a = box_cols(g, ab)?;
    let b = box_cols(g, bb)?;
    let inter = intersection(g, &a, &b)?;
    let denom = g.minimum(a.area, b.area)?;
    let (ratio, _) = masked_ratio_mean(g, inter, denom, n)?;
    let s = g.sum(ratio);
    Ok(g.scale(s, 1.0 / n as f64))
}

/// Refiner terms (regression, sibling overlap, child-parent) for refined
/// token boxes `refined` (`T × 4`).
pub fn refiner_terms(g: &mut Graph<'_>, refined: Var, ex: &Example) -> Result<(Var, Var, Var)> {
    let st = &ex.structure;
    let comp_rows = st.component_rows();
    let reg = if comp_rows.is_empty() {
        zero(g)
    } else {
        let r = g.gather_rows(refined, &comp_rows)?;
        let t = rows_tensor(&comp_rows, |i| ex.targets[i].to_vec(), 4);
        let l = g.smooth_l1(r, &t, REGRESSION_BETA)?;
        g.mean(l)
    };
    let avg = g.constant(st.averaging_matrix());
    let per_component = g.matmul(avg, refined)?;
    let cc = sibling_overlap_term(g, per_component, &st.cc_pairs)?;
    let cp = child_parent_term(g, per_component, &st.cp_pairs)?;
    Ok((reg, cc, cp))
}

/// Full joint objective of one example.
///
/// The generator is teacher-forced with ground-truth boxes; the refiner
/// receives the generator's mixture-mean boxes.
pub fn example_losses(
    model: &Model,
    g: &mut Graph<'_>,
    ex: &Example,
    mask_seed: u64,
    mask_rate: f64,
    weights: &LossWeights,
) -> Result<LossVars> {
    let st = &ex.structure;
    let t_len = st.len();
    let k = model.config.mixtures;
    let masked = mask_tokens(&st.tokens, mask_rate, mask_seed);
    let out = model.predictor.forward(g, &st.tokens, &masked)?;
    let sem = semantic_loss(g, &out, ex, &masked)?;
    let pbox = predictor_box_loss(g, &out, ex)?;
    let pred = g.add(sem, pbox)?;

    let prev = shifted_boxes(st, &ex.targets, t_len);
    let gen = model.generator.forward(g, out.f, out.s, out.p, &prev)?;

    // Mixture likelihood: position head on every non-special step, size head
    // on component steps only.
    let pos_rows = st.non_special_rows();
    let comp_rows = st.component_rows();
    let (box_nll, kl) = if pos_rows.is_empty() {
        (zero(g), zero(g))
    } else {
        let pos_raw = g.gather_rows(gen.position, &pos_rows)?;
        let pos_t = rows_tensor(
            &pos_rows,
            |r| match st.kinds[r] {
                TokenKind::Predicate => vec![2.0 * ex.targets[r][0], 2.0 * ex.targets[r][1]],
                _ => vec![standardize(ex.targets[r][0]), standardize(ex.targets[r][1])],
            },
            2,
        );
        let pos = head_terms(g, pos_raw, &pos_t, k)?;
        let size_raw = g.gather_rows(gen.size, &comp_rows)?;
        let size_t = rows_tensor(
            &comp_rows,
            |r| vec![standardize(ex.targets[r][2]), standardize(ex.targets[r][3])],
            2,
        );
        let size = head_terms(g, size_raw, &size_t, k)?;
        let steps = 1.0 / pos_rows.len() as f64;
        let nll = g.concat_rows(&[pos.nll, size.nll])?;
        let nll = g.sum(nll);
        let nll = g.scale(nll, steps);
        let kl = g.concat_rows(&[pos.kl, size.kl])?;
        let kl = g.sum(kl);
        let kl = g.scale(kl, steps);
        (nll, kl)
    };

    // Mixture means in normalized units; specials are pinned to zero and
    // predicates keep only their offset.
    let pos_mean = head_mean(g, gen.position, k)?;
    let size_mean = head_mean(g, gen.size, k)?;
    let (pos_scale, pos_shift, size_scale, size_shift) = mean_affine(ex, t_len);
    let pos_scale = g.constant(pos_scale);
    let pm = g.mul(pos_mean, pos_scale)?;
    let ps = g.constant(pos_shift);
    let positions = g.add(pm, ps)?;
    let size_scale = g.constant(size_scale);
    let sm = g.mul(size_mean, size_scale)?;
    let ss = g.constant(size_shift);
    let sizes = g.add(sm, ss)?;
    let rel = relation_consistency(g, positions, &st.tokens.spans)?;

    let boxes = g.concat_cols(&[positions, sizes])?;
    let refined = model.refiner.forward(g, gen.c, boxes)?;
    let (reg, cc, cp) = refiner_terms(g, refined, ex)?;

    let terms = [
        (box_nll, weights.box_nll),
        (kl, weights.kl),
        (rel, weights.rel),
        (reg, weights.reg),
        (cc, weights.cc),
        (cp, weights.cp),
    ];
    let mut total = pred;
    for (v, w) in terms {
        let s = g.scale(v, w);
        total = g.add(total, s)?;
    }
    Ok(LossVars {
        pred,
        box_nll,
        kl,
        rel,
        reg,
        cc,
        cp,
        total,
    })
}

/// Per-row affine maps taking standardized mixture means to normalized
/// boxes: components `z/2 + 1/2`, predicate offsets `z/2` (size 0),
/// specials 0.
fn mean_affine(ex: &Example, len: usize) -> (Tensor, Tensor, Tensor, Tensor) {
    let mut pos_scale = vec![0.0; len * 2];
    let mut pos_shift = vec![0.0; len * 2];
    let mut size_scale = vec![0.0; len * 2];
    let mut size_shift = vec![0.0; len * 2];
    for (t, kind) in ex.structure.kinds.iter().enumerate() {
        for d in 0..2 {
            let i = t * 2 + d;
            match kind {
                TokenKind::Component(_) => {
                    pos_scale[i] = 0.5;
                    pos_shift[i] = 0.5;
                    size_scale[i] = 0.5;
                    size_shift[i] = 0.5;
                }
                TokenKind::Predicate => pos_scale[i] = 0.5,
                TokenKind::Special => {}
            }
        }
    }
    let m = |d| Tensor::matrix(len, 2, d).expect("affine");
    (m(pos_scale), m(pos_shift), m(size_scale), m(size_shift))
}

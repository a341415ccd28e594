//! Layout quality metrics and grouped evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ag::{build_gui_ag, GuiAg};
use crate::corpus::ScreenRecord;
use crate::error::{Error, Result};
use crate::layout::{
    child_parent_loss, relationship_satisfied, sibling_overlap_loss, BBox, Layout, Predicate,
};
use crate::model::generate::{generate_layouts, GenerateOptions};
use crate::model::train::mix_seed;
use crate::model::Model;

/// Mean over all (child, parent) pairs of `1 − child_parent_loss`; 1 when
/// there are no pairs.
pub fn cpi(layouts: &[Layout]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for l in layouts {
        for (c, p) in l.child_parent_pairs() {
            sum += 1.0 - child_parent_loss(&l.components[&c].bbox, &l.components[&p].bbox);
            n += 1;
        }
    }
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

/// Mean over all unordered sibling pairs of `1 − sibling_overlap_loss`; 1
/// when there are no pairs.
pub fn ccs(layouts: &[Layout]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for l in layouts {
        for (a, b) in l.sibling_pairs() {
            sum += 1.0 - sibling_overlap_loss(&l.components[&a].bbox, &l.components[&b].bbox);
            n += 1;
        }
    }
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

/// Smallest of the six edge/center distances between two boxes.
pub fn alignment_distance(a: &BBox, b: &BBox) -> f64 {
    let (acx, acy) = a.center();
    let (bcx, bcy) = b.center();
    [
        (a.x - b.x).abs(),
        (acx - bcx).abs(),
        (a.right() - b.right()).abs(),
        (a.y - b.y).abs(),
        (acy - bcy).abs(),
        (a.bottom() - b.bottom()).abs(),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// `1 − (1/N) Σ_layouts Σ_i min_{j≠i} alignment_distance(i, j)` with `N` the
/// total component count. Layouts with fewer than two components add no
/// misalignment.
pub fn alignment(layouts: &[Layout]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for l in layouts {
        let boxes: Vec<BBox> = l.components.values().map(|c| c.bbox).collect();
        n += boxes.len();
        if boxes.len() < 2 {
            continue;
        }
        for (i, a) in boxes.iter().enumerate() {
            let best = boxes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| alignment_distance(a, b))
                .fold(f64::INFINITY, f64::min);
            total += best;
        }
    }
    if n == 0 {
        1.0
    } else {
        (1.0 - total / n as f64).clamp(0.0, 1.0)
    }
}

/// Exact Wasserstein-1 distance between two 1-D empirical distributions:
/// `∫₀¹ |F⁻¹(u) − G⁻¹(u)| du` over the merged quantile breakpoints.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() {
            0.0
        } else {
            f64::NAN
        };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    let (n, m) = (a.len(), b.len());
    // Walk the merged grid {i/n} ∪ {j/m} using integer numerators over n·m.
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0usize;
    let mut total = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        total += (next - prev) as f64 * (a[i] - b[j]).abs();
        prev = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    total / (n * m) as f64
}

/// `1 − mean` over (x, y, w, h) of the Wasserstein-1 distance between the
/// pooled generated and reference boxes. Both empty gives 1; one empty
/// gives 0.
pub fn w_bbox(generated: &[BBox], reference: &[BBox]) -> f64 {
    if generated.is_empty() || reference.is_empty() {
        return if generated.is_empty() && reference.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let props: [fn(&BBox) -> f64; 4] = [|b| b.x, |b| b.y, |b| b.w, |b| b.h];
    let mean: f64 = props
        .iter()
        .map(|f| {
            let a: Vec<f64> = generated.iter().map(f).collect();
            let b: Vec<f64> = reference.iter().map(f).collect();
            wasserstein_1d(&a, &b).min(1.0)
        })
        .sum::<f64>()
        / 4.0;
    (1.0 - mean).clamp(0.0, 1.0)
}

/// Satisfied triplets over all triplets of one graph (1 for a graph with no
/// triplets). An `inside` triplet also needs the graph's recorded parent to
/// be its object. Components missing from the layout satisfy nothing.
pub fn agc_single(ag: &GuiAg, layout: &Layout) -> f64 {
    if ag.triplets.is_empty() {
        return 1.0;
    }
    let ok = ag
        .triplets
        .iter()
        .filter(|t| {
            let (Some(s), Some(o)) = (layout.components.get(&t.subject), layout.bbox(t.object))
            else {
                return false;
            };
            if t.predicate == Predicate::Inside && ag.parent(t.subject) != t.object {
                return false;
            }
            relationship_satisfied(&s.bbox, t.predicate, &o)
        })
        .count();
    ok as f64 / ag.triplets.len() as f64
}

pub fn gui_agc(pairs: &[(GuiAg, Layout)]) -> f64 {
    if pairs.is_empty() {
        return 1.0;
    }
    pairs.iter().map(|(g, l)| agc_single(g, l)).sum::<f64>() / pairs.len() as f64
}

/// Per-layout metric badge returned by the service.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutMetrics {
    pub gui_agc: f64,
    pub cpi: f64,
    pub ccs: f64,
    pub alignment: f64,
}

pub fn layout_metrics(ag: &GuiAg, layout: &Layout) -> LayoutMetrics {
    let one = std::slice::from_ref(layout);
    LayoutMetrics {
        gui_agc: agc_single(ag, layout),
        cpi: cpi(one),
        ccs: ccs(one),
        alignment: alignment(one),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    #[default]
    None,
    Category,
    /// Number of unique component types in the graph.
    Complexity,
}

impl FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "" => Ok(GroupBy::None),
            "category" => Ok(GroupBy::Category),
            "complexity" => Ok(GroupBy::Complexity),
            _ => Err(Error::Config(format!(
                "unknown grouping `{s}` (expected none, category or complexity)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` for the overall row.
    pub group: Option<String>,
    pub n_layouts: usize,
    pub cpi: f64,
    pub ccs: f64,
    pub alignment: f64,
    pub w_bbox: f64,
    pub gui_agc: f64,
}

/// One evaluated graph: the input graph, the generated layout and the
/// layout it was derived from.
#[derive(Clone, Debug)]
pub struct EvalItem {
    pub ag: GuiAg,
    pub generated: Layout,
    pub reference: Layout,
    pub category: String,
}

fn report_for(group: Option<String>, items: &[&EvalItem]) -> EvalReport {
    let generated: Vec<Layout> = items.iter().map(|i| i.generated.clone()).collect();
    let pairs: Vec<(GuiAg, Layout)> = items
        .iter()
        .map(|i| (i.ag.clone(), i.generated.clone()))
        .collect();
    let gen_boxes: Vec<BBox> = generated
        .iter()
        .flat_map(|l| l.components.values().map(|c| c.bbox))
        .collect();
    let ref_boxes: Vec<BBox> = items
        .iter()
        .flat_map(|i| i.reference.components.values().map(|c| c.bbox))
        .collect();
    EvalReport {
        group,
        n_layouts: items.len(),
        cpi: cpi(&generated),
        ccs: ccs(&generated),
        alignment: alignment(&generated),
        w_bbox: w_bbox(&gen_boxes, &ref_boxes),
        gui_agc: gui_agc(&pairs),
    }
}

/// Overall report followed by one report per group, in group order
/// (numeric for complexity).
pub fn summarize(items: &[EvalItem], group_by: GroupBy) -> Vec<EvalReport> {
    let all: Vec<&EvalItem> = items.iter().collect();
    let mut out = vec![report_for(None, &all)];
    let mut groups: BTreeMap<(usize, String), Vec<&EvalItem>> = BTreeMap::new();
    for it in items {
        let key = match group_by {
            GroupBy::None => continue,
            GroupBy::Category => (0, it.category.clone()),
            GroupBy::Complexity => {
                let n = it.ag.unique_classes().len();
                (n, n.to_string())
            }
        };
        groups.entry(key).or_default().push(it);
    }
    for ((_, name), members) in groups {
        out.push(report_for(Some(name), &members));
    }
    out
}

/// Generates one layout per record (graph seed and sample seed derived
/// from `seed` and the record index) and summarizes the results.
pub fn eval_report(
    model: &Model,
    records: &[ScreenRecord],
    group_by: GroupBy,
    temperature: f64,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    let items = evaluate_records(model, records, temperature, seed)?;
    Ok(summarize(&items, group_by))
}

pub fn evaluate_records(
    model: &Model,
    records: &[ScreenRecord],
    temperature: f64,
    seed: u64,
) -> Result<Vec<EvalItem>> {
    let mut items = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let ag = build_gui_ag(&r.layout, mix_seed(seed, i as u64))?;
        let opts = GenerateOptions {
            samples: 1,
            temperature,
            seed: mix_seed(seed ^ 0xA5A5, i as u64),
        };
        let generated = match generate_layouts(model, &ag, &opts) {
            Ok(mut v) => v.remove(0),
            Err(Error::SequenceTooLong { .. }) => {
                log::warn!("skipping {}: sequence too long", r.layout.screen_id);
                continue;
            }
            Err(e) => return Err(e),
        };
        items.push(EvalItem {
            ag,
            generated,
            reference: r.layout.to_layout(),
            category: r.category.clone(),
        });
    }
    Ok(items)
}

/// Plain-text table with the columns CPI, CCS, Alignment, W bbox, GUI-AGC.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>6} {:>8} {:>8} {:>10} {:>8} {:>8}",
        "group", "n", "CPI", "CCS", "Alignment", "W bbox", "GUI-AGC"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<14} {:>6} {:>8.4} {:>8.4} {:>10.4} {:>8.4} {:>8.4}",
            r.group.as_deref().unwrap_or("all"),
            r.n_layouts,
            r.cpi,
            r.ccs,
            r.alignment,
            r.w_bbox,
            r.gui_agc
        );
    }
    s
}

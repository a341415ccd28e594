//! Wire types shared by the CLI output files and the HTTP API.

use serde::{Deserialize, Serialize};

use guilget_core::ag::GuiAg;
use guilget_core::layout::{BBox, ComponentClass, Layout};
use guilget_core::metrics::LayoutMetrics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDoc {
    pub id: u32,
    pub class: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutDoc {
    pub boxes: Vec<BoxDoc>,
}

impl LayoutDoc {
    /// Boxes in id order.
    pub fn from_layout(layout: &Layout) -> Self {
        LayoutDoc {
            boxes: layout
                .components
                .iter()
                .map(|(&id, c)| BoxDoc {
                    id,
                    class: c.class.name().to_string(),
                    x: c.bbox.x,
                    y: c.bbox.y,
                    w: c.bbox.w,
                    h: c.bbox.h,
                })
                .collect(),
        }
    }

    /// Rebuilds a layout over `ag`'s components, taking parents from the
    /// graph. Every box must name a graph component with its class.
    pub fn to_layout(&self, ag: &GuiAg) -> Result<Layout, String> {
        let mut layout = Layout::default();
        for b in &self.boxes {
            let class: ComponentClass = b.class.parse().map_err(|e| format!("{e}"))?;
            let comp = ag
                .component(b.id)
                .ok_or_else(|| format!("box {} is not a component of the graph", b.id))?;
            if comp.class != class {
                return Err(format!(
                    "box {} has class {} but the graph says {}",
                    b.id, class, comp.class
                ));
            }
            if ![b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()) || b.w < 0.0 || b.h < 0.0 {
                return Err(format!("box {} has invalid geometry", b.id));
            }
            if layout.components.contains_key(&b.id) {
                return Err(format!("duplicate box id {}", b.id));
            }
            layout.insert(b.id, class, BBox::new(b.x, b.y, b.w, b.h), ag.parent(b.id));
        }
        Ok(layout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedLayout {
    pub boxes: Vec<BoxDoc>,
    pub metrics: LayoutMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub seed: u64,
    pub layouts: Vec<GeneratedLayout>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabClass {
    pub id: usize,
    pub name: String,
    pub container: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub classes: Vec<VocabClass>,
    pub predicates: Vec<String>,
}

impl Vocab {
    pub fn current() -> Self {
        Vocab {
            classes: ComponentClass::ALL
                .iter()
                .map(|c| VocabClass {
                    id: c.id(),
                    name: c.name().to_string(),
                    container: c.is_container(),
                })
                .collect(),
            predicates: guilget_core::layout::Predicate::ALL
                .iter()
                .map(|p| p.name().to_string())
                .collect(),
        }
    }
}

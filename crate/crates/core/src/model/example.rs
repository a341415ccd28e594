//! Per-graph tensors shared by training and generation.

use std::collections::BTreeMap;

use crate::ag::{serialize_ag, GuiAg, SequenceLimits, TokenSequence, TYPE_PREDICATE, TYPE_SPECIAL};
use crate::error::{Error, Result};
use crate::layout::{BBox, ROOT_ID};
use crate::nn::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Special,
    /// Subject or object token; the index is into [`Structure::components`].
    Component(usize),
    Predicate,
}

/// Everything about a graph the model needs except ground-truth boxes.
#[derive(Clone, Debug)]
pub struct Structure {
    pub ag: GuiAg,
    pub tokens: TokenSequence,
    pub kinds: Vec<TokenKind>,
    /// Instance ids in dense order.
    pub components: Vec<u32>,
    /// Token rows holding each component.
    pub occurrences: Vec<Vec<usize>>,
    /// (child, parent) component indices, parent not ROOT.
    pub cp_pairs: Vec<(usize, usize)>,
    /// Unordered sibling pairs (ROOT children included).
    pub cc_pairs: Vec<(usize, usize)>,
}

impl Structure {
    pub fn new(ag: &GuiAg, limits: SequenceLimits) -> Result<Self> {
        ag.validate()?;
        if ag.components.is_empty() {
            return Err(Error::NoComponents);
        }
        let tokens = serialize_ag(ag, limits)?;
        let components = tokens.objects.clone();
        let index: BTreeMap<u32, usize> = components
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
        let mut occurrences = vec![Vec::new(); components.len()];
        let kinds = (0..tokens.len())
            .map(|t| match (tokens.type_ids[t], tokens.instances[t]) {
                (TYPE_SPECIAL, _) => TokenKind::Special,
                (TYPE_PREDICATE, _) => TokenKind::Predicate,
                (_, Some(id)) => {
                    let k = index[&id];
                    occurrences[k].push(t);
                    TokenKind::Component(k)
                }
                (_, None) => TokenKind::Special,
            })
            .collect();
        // Pairs only involve components that have tokens to place them.
        let mut cp_pairs = Vec::new();
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (k, &id) in components.iter().enumerate() {
            if occurrences[k].is_empty() {
                continue;
            }
            let p = ag.parent(id);
            if p != ROOT_ID && occurrences[index[&p]].is_empty() {
                continue;
            }
            if p != ROOT_ID {
                cp_pairs.push((k, index[&p]));
            }
            groups.entry(p).or_default().push(k);
        }
        let mut cc_pairs = Vec::new();
        for g in groups.values() {
            for (i, &a) in g.iter().enumerate() {
                for &b in &g[i + 1..] {
                    cc_pairs.push((a, b));
                }
            }
        }
        Ok(Structure {
            ag: ag.clone(),
            tokens,
            kinds,
            components,
            occurrences,
            cp_pairs,
            cc_pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn component_rows(&self) -> Vec<usize> {
        self.rows_where(|k| matches!(k, TokenKind::Component(_)))
    }

    pub fn predicate_rows(&self) -> Vec<usize> {
        self.rows_where(|k| k == TokenKind::Predicate)
    }

    pub fn non_special_rows(&self) -> Vec<usize> {
        self.rows_where(|k| k != TokenKind::Special)
    }

    fn rows_where(&self, f: impl Fn(TokenKind) -> bool) -> Vec<usize> {
        (0..self.kinds.len())
            .filter(|&t| f(self.kinds[t]))
            .collect()
    }

    /// `n_components × T` matrix averaging each component's token rows.
    /// Components without tokens get an all-zero row.
    pub fn averaging_matrix(&self) -> Tensor {
        let t = self.len();
        let mut m = Tensor::zeros(self.components.len(), t);
        for (k, occ) in self.occurrences.iter().enumerate() {
            for &r in occ {
                m.data_mut()[k * t + r] = 1.0 / occ.len() as f64;
            }
        }
        m
    }

    /// Per-token boxes from per-component boxes: components keep their box,
    /// predicates carry the object−subject top-left offset, specials are 0.
    pub fn token_boxes(&self, boxes: &[BBox]) -> Vec<[f64; 4]> {
        let mut out = vec![[0.0; 4]; self.len()];
        for (t, kind) in self.kinds.iter().enumerate() {
            if let TokenKind::Component(k) = *kind {
                out[t] = boxes[k].to_array();
            }
        }
        for span in &self.tokens.spans {
            let s = out[span[0]];
            let o = out[span[2]];
            out[span[1]] = [o[0] - s[0], o[1] - s[1], 0.0, 0.0];
        }
        out
    }
}

/// A structure with ground-truth boxes, ready for training.
#[derive(Clone, Debug)]
pub struct Example {
    pub structure: Structure,
    /// Ground-truth box per component (dense order).
    pub boxes: Vec<BBox>,
    /// Ground-truth box per token, in normalized units (see
    /// [`Structure::token_boxes`]).
    pub targets: Vec<[f64; 4]>,
}

impl Example {
    pub fn new(ag: &GuiAg, limits: SequenceLimits) -> Result<Self> {
        let structure = Structure::new(ag, limits)?;
        let boxes = structure
            .components
            .iter()
            .map(|&id| {
                ag.component(id)
                    .and_then(|c| c.bbox)
                    .ok_or_else(|| Error::InvalidGraph(format!("component {id} has no box")))
            })
            .collect::<Result<Vec<_>>>()?;
        let targets = structure.token_boxes(&boxes);
        Ok(Example {
            structure,
            boxes,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.structure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structure.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ag::build_gui_ag;
    use crate::layout::{ComponentClass, LayoutNode, LayoutTree};

    fn tree() -> LayoutTree {
        LayoutTree::new(
            "t",
            vec![
                LayoutNode::leaf(5, ComponentClass::Toolbar, BBox::new(0.0, 0.0, 1.0, 0.1))
                    .with_children(vec![LayoutNode::leaf(
                        6,
                        ComponentClass::Text,
                        BBox::new(0.1, 0.02, 0.5, 0.06),
                    )]),
                LayoutNode::leaf(7, ComponentClass::Container, BBox::new(0.0, 0.1, 1.0, 0.8))
                    .with_children(vec![
                        LayoutNode::leaf(8, ComponentClass::Button, BBox::new(0.1, 0.2, 0.3, 0.1)),
                        LayoutNode::leaf(9, ComponentClass::Image, BBox::new(0.5, 0.2, 0.3, 0.3)),
                    ]),
            ],
        )
    }

    #[test]
    fn pairs_and_targets() {
        let ag = build_gui_ag(&tree(), 1).unwrap();
        let ex = Example::new(&ag, SequenceLimits::default()).unwrap();
        let s = &ex.structure;
        assert_eq!(s.cp_pairs.len(), 3);
        // Siblings: {5,7} under ROOT and {8,9} under 7.
        assert_eq!(s.cc_pairs.len(), 2);
        for span in &s.tokens.spans {
            let (sb, ob, pb) = (
                ex.targets[span[0]],
                ex.targets[span[2]],
                ex.targets[span[1]],
            );
            assert_eq!(pb, [ob[0] - sb[0], ob[1] - sb[1], 0.0, 0.0]);
        }
        let m = s.averaging_matrix();
        for k in 0..s.components.len() {
            let total: f64 = m.row(k).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_boxes_rejected() {
        let ag = build_gui_ag(&tree(), 1).unwrap().without_boxes();
        assert!(Example::new(&ag, SequenceLimits::default()).is_err());
        assert!(Structure::new(&ag, SequenceLimits::default()).is_ok());
    }
}

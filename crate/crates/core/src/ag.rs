//! GUI arrangement graphs: construction from layout trees, the AG JSON
//! document format, and flattening into the five parallel token streams the
//! predictor consumes.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{
    directional_predicate, ComponentClass, ComponentInstance, LayoutNode, LayoutTree, Predicate,
    RelationTriplet, ROOT_ID,
};
use crate::nn::ModelConfig;

pub const PREDICATE_OFFSET: usize = ComponentClass::COUNT;
pub const CLS: usize = PREDICATE_OFFSET + 5;
pub const SEP: usize = CLS + 1;
pub const MASK: usize = CLS + 2;
pub const PAD: usize = CLS + 3;
pub const WORD_VOCAB: usize = CLS + 4;

pub const TYPE_SPECIAL: usize = 0;
pub const TYPE_SUBJECT: usize = 1;
pub const TYPE_PREDICATE: usize = 2;
pub const TYPE_OBJECT: usize = 3;
pub const TYPE_VOCAB: usize = 4;

pub fn predicate_word(p: Predicate) -> usize {
    PREDICATE_OFFSET + p.id()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GuiAg {
    pub components: Vec<ComponentInstance>,
    pub triplets: Vec<RelationTriplet>,
    /// True parent of every component; ROOT is 0.
    pub parent_of: BTreeMap<u32, u32>,
}

impl GuiAg {
    pub fn component(&self, id: u32) -> Option<&ComponentInstance> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn parent(&self, id: u32) -> u32 {
        self.parent_of.get(&id).copied().unwrap_or(ROOT_ID)
    }

    pub fn unique_classes(&self) -> BTreeSet<ComponentClass> {
        self.components.iter().map(|c| c.class).collect()
    }

    pub fn has_boxes(&self) -> bool {
        self.components.iter().all(|c| c.bbox.is_some())
    }

    pub fn without_boxes(&self) -> GuiAg {
        let mut g = self.clone();
        for c in &mut g.components {
            c.bbox = None;
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGraph(m));
        let mut ids = BTreeSet::new();
        for c in &self.components {
            if c.id == ROOT_ID {
                return bad("component id 0 is reserved for ROOT".into());
            }
            if !ids.insert(c.id) {
                return bad(format!("duplicate component id {}", c.id));
            }
        }
        for (i, t) in self.triplets.iter().enumerate() {
            for id in [t.subject, t.object] {
                if !ids.contains(&id) {
                    return bad(format!("relation {i} references unknown component {id}"));
                }
            }
            if t.subject == t.object {
                return bad(format!(
                    "relation {i} relates component {} to itself",
                    t.subject
                ));
            }
        }
        for (&child, &parent) in &self.parent_of {
            if !ids.contains(&child) {
                return bad(format!("parent entry for unknown component {child}"));
            }
            if parent != ROOT_ID && !ids.contains(&parent) {
                return bad(format!("component {child} has unknown parent {parent}"));
            }
        }
        for &start in &ids {
            let mut cur = start;
            for _ in 0..=ids.len() {
                cur = self.parent(cur);
                if cur == ROOT_ID {
                    break;
                }
            }
            if cur != ROOT_ID {
                return bad(format!("parent cycle through component {start}"));
            }
        }
        Ok(())
    }

    // --- AG JSON document ---

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: AgDocument = serde_json::from_str(s)?;
        doc.into_ag()
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        let doc: AgDocument = serde_json::from_value(v)?;
        doc.into_ag()
    }

    pub fn to_document(&self) -> AgDocument {
        AgDocument {
            components: self
                .components
                .iter()
                .map(|c| DocComponent {
                    id: c.id,
                    class: c.class.name().to_string(),
                })
                .collect(),
            relations: self
                .triplets
                .iter()
                .map(|t| DocRelation {
                    s: t.subject,
                    p: t.predicate.name().to_string(),
                    o: t.object,
                })
                .collect(),
            parents: Some(
                self.components
                    .iter()
                    .map(|c| (c.id.to_string(), self.parent(c.id)))
                    .collect(),
            ),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_document()).expect("ag json")
    }

    /// Canonical text form.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("ag json")
    }
}

/// Wire form of a graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgDocument {
    pub components: Vec<DocComponent>,
    pub relations: Vec<DocRelation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parents: Option<BTreeMap<String, u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocComponent {
    pub id: u32,
    pub class: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocRelation {
    pub s: u32,
    pub p: String,
    pub o: u32,
}

impl AgDocument {
    pub fn into_ag(self) -> Result<GuiAg> {
        let components = self
            .components
            .iter()
            .map(|c| {
                Ok(ComponentInstance {
                    id: c.id,
                    class: c.class.parse()?,
                    bbox: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let triplets = self
            .relations
            .iter()
            .map(|r| Ok(RelationTriplet::new(r.s, r.p.parse()?, r.o)))
            .collect::<Result<Vec<_>>>()?;
        let mut ag = GuiAg {
            components,
            triplets,
            parent_of: BTreeMap::new(),
        };
        // Validate ids before using relations to infer parents.
        ag.validate()?;
        match self.parents {
            Some(map) => {
                for (k, v) in map {
                    let child: u32 = k.parse().map_err(|_| {
                        Error::InvalidGraph(format!("parent key `{k}` is not an id"))
                    })?;
                    ag.parent_of.insert(child, v);
                }
            }
            None => {
                for t in &ag.triplets {
                    if t.predicate == Predicate::Inside {
                        ag.parent_of.entry(t.subject).or_insert(t.object);
                    }
                }
            }
        }
        for c in &ag.components {
            ag.parent_of.entry(c.id).or_insert(ROOT_ID);
        }
        ag.validate()?;
        Ok(ag)
    }
}

/// Builds the arrangement graph of a screen.
///
/// Sibling groups are visited in pre-order starting at ROOT. A group under a
/// real parent contributes one `inside` triplet for a randomly chosen child;
/// its children are then shuffled and each consecutive pair is related by
/// the dominant direction between their boxes.
pub fn build_gui_ag(layout: &LayoutTree, seed: u64) -> Result<GuiAg> {
    let flat = layout.flatten();
    if flat.is_empty() {
        return Err(Error::NoComponents);
    }
    layout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ag = GuiAg {
        components: flat.iter().map(|c| c.instance.clone()).collect(),
        triplets: Vec::new(),
        parent_of: flat.iter().map(|c| (c.instance.id, c.parent)).collect(),
    };
    let boxes: BTreeMap<u32, _> = flat
        .iter()
        .map(|c| {
            c.instance.bbox.map(|b| (c.instance.id, b)).ok_or_else(|| {
                Error::InvalidLayout(format!("component {} has no box", c.instance.id))
            })
        })
        .collect::<Result<_>>()?;

    fn visit(
        parent: u32,
        children: &[LayoutNode],
        boxes: &BTreeMap<u32, crate::layout::BBox>,
        rng: &mut ChaCha8Rng,
        out: &mut Vec<RelationTriplet>,
    ) {
        if !children.is_empty() {
            if parent != ROOT_ID {
                let pick = rng.random_range(0..children.len());
                out.push(RelationTriplet::new(
                    children[pick].instance.id,
                    Predicate::Inside,
                    parent,
                ));
            }
            let mut order: Vec<u32> = children.iter().map(|c| c.instance.id).collect();
            order.shuffle(rng);
            for w in order.windows(2) {
                let p = directional_predicate(&boxes[&w[0]], &boxes[&w[1]]);
                out.push(RelationTriplet::new(w[0], p, w[1]));
            }
        }
        for c in children {
            visit(c.instance.id, &c.children, boxes, rng, out);
        }
    }
    visit(
        ROOT_ID,
        &layout.children,
        &boxes,
        &mut rng,
        &mut ag.triplets,
    );
    Ok(ag)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequenceLimits {
    pub max_seq_len: usize,
    pub max_objects: usize,
}

impl Default for SequenceLimits {
    fn default() -> Self {
        SequenceLimits::from(&ModelConfig::default())
    }
}

impl From<&ModelConfig> for SequenceLimits {
    fn from(c: &ModelConfig) -> Self {
        SequenceLimits {
            max_seq_len: c.max_seq_len,
            max_objects: c.max_objects,
        }
    }
}

/// A graph as five aligned id streams.
///
/// Object and parent ids are dense per graph: components are numbered from 1
/// in order of first appearance in the triplets, then any remaining
/// components in graph order. ROOT and "no object" are 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub word_ids: Vec<usize>,
    pub object_ids: Vec<usize>,
    pub relationship_ids: Vec<usize>,
    pub type_ids: Vec<usize>,
    pub parent_ids: Vec<usize>,
    /// Component behind each subject/object token.
    pub instances: Vec<Option<u32>>,
    /// Token positions of (subject, predicate, object) for each triplet.
    pub spans: Vec<[usize; 3]>,
    /// Instance ids by dense index; entry `k` has dense id `k + 1`.
    pub objects: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }

    pub fn dense_id(&self, instance: u32) -> Option<usize> {
        self.objects
            .iter()
            .position(|&i| i == instance)
            .map(|k| k + 1)
    }

    pub fn is_special(&self, pos: usize) -> bool {
        self.type_ids[pos] == TYPE_SPECIAL
    }

    /// Token positions where `instance` appears as subject or object.
    pub fn occurrences(&self, instance: u32) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.instances[i] == Some(instance))
            .collect()
    }
}

pub fn serialize_ag(ag: &GuiAg, limits: SequenceLimits) -> Result<TokenSequence> {
    let t = ag.triplets.len();
    let len = if t == 0 { 1 } else { 4 * t };
    if len > limits.max_seq_len {
        return Err(Error::SequenceTooLong {
            what: "tokens",
            len,
            max: limits.max_seq_len,
        });
    }
    if ag.components.len() > limits.max_objects {
        return Err(Error::SequenceTooLong {
            what: "components",
            len: ag.components.len(),
            max: limits.max_objects,
        });
    }
    let mut objects: Vec<u32> = Vec::with_capacity(ag.components.len());
    let mut seen = BTreeSet::new();
    for tr in &ag.triplets {
        for id in [tr.subject, tr.object] {
            if seen.insert(id) {
                objects.push(id);
            }
        }
    }
    for c in &ag.components {
        if seen.insert(c.id) {
            objects.push(c.id);
        }
    }
    let dense: BTreeMap<u32, usize> = objects
        .iter()
        .enumerate()
        .map(|(k, &id)| (id, k + 1))
        .collect();
    let class_of = |id: u32| -> Result<ComponentClass> {
        ag.component(id)
            .map(|c| c.class)
            .ok_or_else(|| Error::InvalidGraph(format!("unknown component {id}")))
    };
    let parent_dense = |id: u32| -> usize {
        let p = ag.parent(id);
        if p == ROOT_ID {
            0
        } else {
            dense.get(&p).copied().unwrap_or(0)
        }
    };

    let mut seq = TokenSequence {
        word_ids: Vec::with_capacity(len),
        object_ids: Vec::with_capacity(len),
        relationship_ids: Vec::with_capacity(len),
        type_ids: Vec::with_capacity(len),
        parent_ids: Vec::with_capacity(len),
        instances: Vec::with_capacity(len),
        spans: Vec::with_capacity(t),
        objects,
    };
    let push = |seq: &mut TokenSequence, w, o, r, ty, p, inst| {
        seq.word_ids.push(w);
        seq.object_ids.push(o);
        seq.relationship_ids.push(r);
        seq.type_ids.push(ty);
        seq.parent_ids.push(p);
        seq.instances.push(inst);
    };
    push(&mut seq, CLS, 0, 0, TYPE_SPECIAL, 0, None);
    for (k, tr) in ag.triplets.iter().enumerate() {
        if k > 0 {
            push(&mut seq, SEP, 0, 0, TYPE_SPECIAL, 0, None);
        }
        let start = seq.len();
        let rel = k + 1;
        push(
            &mut seq,
            class_of(tr.subject)?.id(),
            dense[&tr.subject],
            rel,
            TYPE_SUBJECT,
            parent_dense(tr.subject),
            Some(tr.subject),
        );
        push(
            &mut seq,
            predicate_word(tr.predicate),
            0,
            rel,
            TYPE_PREDICATE,
            0,
            None,
        );
        push(
            &mut seq,
            class_of(tr.object)?.id(),
            dense[&tr.object],
            rel,
            TYPE_OBJECT,
            parent_dense(tr.object),
            Some(tr.object),
        );
        seq.spans.push([start, start + 1, start + 2]);
    }
    debug_assert_eq!(seq.len(), len);
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{BBox, LayoutNode};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    /// The worked example: a container holding a date picker above a
    /// navigation element, next to a top-level text.
    fn example_tree() -> LayoutTree {
        LayoutTree::new(
            "fig",
            vec![
                LayoutNode::leaf(1, ComponentClass::Text, BBox::new(0.1, 0.05, 0.8, 0.1)),
                LayoutNode::leaf(2, ComponentClass::Container, BBox::new(0.05, 0.2, 0.9, 0.7))
                    .with_children(vec![
                        LayoutNode::leaf(
                            3,
                            ComponentClass::DatePicker,
                            BBox::new(0.1, 0.25, 0.8, 0.3),
                        ),
                        LayoutNode::leaf(
                            6,
                            ComponentClass::NavigationBar,
                            BBox::new(0.1, 0.7, 0.8, 0.15),
                        ),
                    ]),
            ],
        )
    }

    #[test]
    fn example_graph_shape() {
        for seed in 0..20 {
            let ag = build_gui_ag(&example_tree(), seed).unwrap();
            let inside: Vec<_> = ag
                .triplets
                .iter()
                .filter(|t| t.predicate == Predicate::Inside)
                .collect();
            assert_eq!(inside.len(), 1);
            assert_eq!(inside[0].object, 2);
            assert!([3, 6].contains(&inside[0].subject));
            let inner: Vec<_> = ag
                .triplets
                .iter()
                .filter(|t| t.predicate != Predicate::Inside && t.object != 1 && t.subject != 1)
                .collect();
            assert_eq!(inner.len(), 1);
            let t = inner[0];
            match (t.subject, t.object) {
                (6, 3) => assert_eq!(t.predicate, Predicate::Below),
                (3, 6) => assert_eq!(t.predicate, Predicate::Above),
                other => panic!("unexpected pair {other:?}"),
            }
            assert_eq!(ag.parent(6), 2);
            assert_eq!(ag.parent(1), ROOT_ID);
        }
    }

    #[test]
    fn single_child_under_root() {
        let tree = LayoutTree::new(
            "one",
            vec![LayoutNode::leaf(
                1,
                ComponentClass::Button,
                BBox::new(0.1, 0.1, 0.2, 0.2),
            )],
        );
        let ag = build_gui_ag(&tree, 0).unwrap();
        assert!(ag.triplets.is_empty());
        let seq = serialize_ag(&ag, SequenceLimits::default()).unwrap();
        assert_eq!(seq.word_ids, vec![CLS]);
        assert_eq!(seq.objects, vec![1]);
    }

    #[test]
    fn empty_tree_is_an_error() {
        let err = build_gui_ag(&LayoutTree::new("e", vec![]), 0).unwrap_err();
        assert_eq!(err.to_string(), "no components");
    }

    #[test]
    fn serialization_streams() {
        let ag = GuiAg::from_json_str(
            r#"{"components":[{"id":1,"class":"BUTTON"},{"id":2,"class":"CONTAINER"}],"relations":[{"s":1,"p":"inside","o":2}]}"#,
        )
        .unwrap();
        let seq = serialize_ag(&ag, SequenceLimits::default()).unwrap();
        assert_eq!(seq.type_ids, vec![0, 1, 2, 3]);
        assert_eq!(
            seq.word_ids,
            vec![
                CLS,
                ComponentClass::Button.id(),
                predicate_word(Predicate::Inside),
                ComponentClass::Container.id()
            ]
        );
        assert_eq!(seq.object_ids, vec![0, 1, 0, 2]);
        assert_eq!(seq.parent_ids, vec![0, 2, 0, 0]);
        assert_eq!(seq.relationship_ids, vec![0, 1, 1, 1]);
        assert_eq!(seq.spans, vec![[1, 2, 3]]);
    }

    #[test]
    fn two_triplets_make_eight_tokens() {
        let ag = build_gui_ag(&example_tree(), 3).unwrap();
        let first_two = GuiAg {
            triplets: ag.triplets[..2].to_vec(),
            ..ag
        };
        let seq = serialize_ag(&first_two, SequenceLimits::default()).unwrap();
        assert_eq!(seq.len(), 8);
        assert_eq!(seq.word_ids[0], CLS);
        assert_eq!(seq.word_ids[4], SEP);
    }

    #[test]
    fn limits_enforced() {
        let ag = build_gui_ag(&example_tree(), 3).unwrap();
        let tight = SequenceLimits {
            max_seq_len: 4,
            max_objects: 64,
        };
        let err = serialize_ag(&ag, tight).unwrap_err().to_string();
        assert!(err.starts_with("sequence too long"), "{err}");
        let few = SequenceLimits {
            max_seq_len: 160,
            max_objects: 2,
        };
        assert!(serialize_ag(&ag, few).is_err());
    }

    #[test]
    fn parse_errors() {
        let dangling =
            r#"{"components":[{"id":1,"class":"BUTTON"}],"relations":[{"s":1,"p":"left","o":9}]}"#;
        assert_eq!(
            GuiAg::from_json_str(dangling).unwrap_err().to_string(),
            "invalid graph: relation 0 references unknown component 9"
        );
        let dup =
            r#"{"components":[{"id":1,"class":"BUTTON"},{"id":1,"class":"TEXT"}],"relations":[]}"#;
        assert!(GuiAg::from_json_str(dup)
            .unwrap_err()
            .to_string()
            .contains("duplicate component id 1"));
        let selfrel =
            r#"{"components":[{"id":1,"class":"BUTTON"}],"relations":[{"s":1,"p":"left","o":1}]}"#;
        assert!(GuiAg::from_json_str(selfrel)
            .unwrap_err()
            .to_string()
            .contains("to itself"));
        let class = r#"{"components":[{"id":1,"class":"WIDGET"}],"relations":[]}"#;
        assert!(GuiAg::from_json_str(class)
            .unwrap_err()
            .to_string()
            .contains("WIDGET"));
        let pred = r#"{"components":[{"id":1,"class":"TEXT"},{"id":2,"class":"TEXT"}],"relations":[{"s":1,"p":"near","o":2}]}"#;
        assert!(GuiAg::from_json_str(pred)
            .unwrap_err()
            .to_string()
            .contains("near"));
        let cycle = r#"{"components":[{"id":1,"class":"CARD_VIEW"},{"id":2,"class":"CARD_VIEW"}],"relations":[],"parents":{"1":2,"2":1}}"#;
        assert!(GuiAg::from_json_str(cycle)
            .unwrap_err()
            .to_string()
            .contains("cycle"));
    }

    #[test]
    fn parents_inferred_from_inside() {
        let ag = GuiAg::from_json_str(
            r#"{"components":[{"id":1,"class":"BUTTON"},{"id":2,"class":"CONTAINER"},{"id":3,"class":"TEXT"}],
                "relations":[{"s":1,"p":"inside","o":2},{"s":3,"p":"top","o":1}]}"#,
        )
        .unwrap();
        assert_eq!(ag.parent(1), 2);
        assert_eq!(ag.parent(2), ROOT_ID);
        assert_eq!(ag.parent(3), ROOT_ID);
        assert_eq!(ag.triplets[1].predicate, Predicate::Above);
    }

    /// Random tree with arbitrary geometry; ids are a random permutation.
    fn random_tree(seed: u64, max_nodes: usize) -> LayoutTree {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=max_nodes);
        let mut ids: Vec<u32> = (1..=n as u32 * 3).collect();
        ids.shuffle(&mut rng);
        let mut parents = vec![usize::MAX; n];
        for (i, p) in parents.iter_mut().enumerate().skip(1) {
            if rng.random_bool(0.4) {
                *p = rng.random_range(0..i);
            }
        }
        fn build(i: usize, parents: &[usize], ids: &[u32], rng: &mut ChaCha8Rng) -> LayoutNode {
            let b = BBox::new(
                rng.random_range(0.0..0.8),
                rng.random_range(0.0..0.8),
                rng.random_range(0.01..0.2),
                rng.random_range(0.01..0.2),
            );
            let class = ComponentClass::from_id(rng.random_range(0..24)).unwrap();
            let kids: Vec<usize> = (0..parents.len()).filter(|&j| parents[j] == i).collect();
            LayoutNode::leaf(ids[i], class, b).with_children(
                kids.into_iter()
                    .map(|j| build(j, parents, ids, rng))
                    .collect(),
            )
        }
        let roots: Vec<usize> = (0..n).filter(|&j| parents[j] == usize::MAX).collect();
        let children = roots
            .into_iter()
            .map(|j| build(j, &parents, &ids, &mut rng))
            .collect();
        LayoutTree::new(format!("r{seed}"), children)
    }

    fn expected_triplets(nodes: &[LayoutNode], under_root: bool) -> usize {
        let mut n = 0;
        if !nodes.is_empty() {
            n += usize::from(!under_root) + nodes.len() - 1;
        }
        for c in nodes {
            n += expected_triplets(&c.children, false);
        }
        n
    }

    proptest! {
        #[test]
        fn triplet_count_and_coverage(seed in any::<u64>(), ag_seed in any::<u64>()) {
            let tree = random_tree(seed, 20);
            let ag = build_gui_ag(&tree, ag_seed).unwrap();
            prop_assert_eq!(ag.triplets.len(), expected_triplets(&tree.children, true));

            let mentioned: BTreeSet<u32> =
                ag.triplets.iter().flat_map(|t| [t.subject, t.object]).collect();
            let flat = tree.flatten();
            for c in &flat {
                prop_assert!(mentioned.contains(&c.instance.id) || flat.len() == 1);
                prop_assert_eq!(ag.parent(c.instance.id), c.parent);
            }
            let mut pairs = BTreeSet::new();
            for t in &ag.triplets {
                let key = (t.subject.min(t.object), t.subject.max(t.object));
                prop_assert!(pairs.insert(key), "duplicate pair {:?}", key);
                prop_assert!(t.predicate != Predicate::Inside || t.object != ROOT_ID);
            }
            prop_assert_eq!(&ag, &build_gui_ag(&tree, ag_seed).unwrap());
        }

        #[test]
        fn serialized_length_and_streams(seed in any::<u64>()) {
            let ag = build_gui_ag(&random_tree(seed, 12), seed ^ 7).unwrap();
            let seq = serialize_ag(&ag, SequenceLimits::default()).unwrap();
            let t = ag.triplets.len();
            prop_assert_eq!(seq.len(), if t == 0 { 1 } else { 4 * t });
            for s in [&seq.object_ids, &seq.relationship_ids, &seq.type_ids, &seq.parent_ids] {
                prop_assert_eq!(s.len(), seq.len());
            }
            for (k, span) in seq.spans.iter().enumerate() {
                prop_assert_eq!(seq.object_ids[span[1]], 0);
                prop_assert_eq!(seq.parent_ids[span[1]], 0);
                prop_assert_eq!(seq.relationship_ids[span[0]], k + 1);
                let sub = ag.triplets[k].subject;
                prop_assert_eq!(seq.objects[seq.object_ids[span[0]] - 1], sub);
                let p = ag.parent(sub);
                let expected = if p == ROOT_ID { 0 } else { seq.dense_id(p).unwrap() };
                prop_assert_eq!(seq.parent_ids[span[0]], expected);
            }
        }

        #[test]
        fn json_round_trip(seed in any::<u64>()) {
            let ag = build_gui_ag(&random_tree(seed, 15), seed).unwrap().without_boxes();
            let text = ag.to_json_string();
            prop_assert_eq!(&GuiAg::from_json_str(&text).unwrap(), &ag);
            // Without the parents map, parents come back from inside relations
            // and default to ROOT.
            let mut doc = ag.to_document();
            doc.parents = None;
            let reparsed = doc.into_ag().unwrap();
            for t in &ag.triplets {
                if t.predicate == Predicate::Inside {
                    prop_assert_eq!(reparsed.parent(t.subject), t.object);
                }
            }
        }
    }
}

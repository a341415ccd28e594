//! Screens, components, boxes and relations, plus the exact box geometry
//! shared by the training losses and the evaluation metrics.
//!
//! All coordinates are normalized by the screen width/height, so a full
//! screen is `(0, 0, 1, 1)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Instance id reserved for the implicit screen root.
pub const ROOT_ID: u32 = 0;

/// Default containment ratio at which a box counts as `inside` another.
pub const CONTAINMENT_THRESHOLD: f64 = 0.95;

/// Slack allowed on ground-truth boxes that touch the screen edge.
pub const SCREEN_EPS: f64 = 1e-6;

macro_rules! component_classes {
    ($($variant:ident = $id:literal, $name:literal, $container:literal;)*) => {
        /// The 24 component categories of the CLAY label set.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum ComponentClass {
            $($variant = $id,)*
        }

        impl ComponentClass {
            pub const ALL: [ComponentClass; 24] = [$(ComponentClass::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(ComponentClass::$variant => $name,)*
                }
            }

            /// Spatial layout (container) classes organize other components;
            /// everything else is a leaf widget.
            pub fn is_container(self) -> bool {
                match self {
                    $(ComponentClass::$variant => $container,)*
                }
            }
        }
    };
}

component_classes! {
    Background = 0, "BACKGROUND", false;
    Image = 1, "IMAGE", false;
    Pictogram = 2, "PICTOGRAM", false;
    Button = 3, "BUTTON", false;
    Text = 4, "TEXT", false;
    Label = 5, "LABEL", false;
    TextInput = 6, "TEXT_INPUT", false;
    Map = 7, "MAP", false;
    CheckBox = 8, "CHECK_BOX", false;
    Switch = 9, "SWITCH", false;
    PagerIndicator = 10, "PAGER_INDICATOR", false;
    Slider = 11, "SLIDER", false;
    RadioButton = 12, "RADIO_BUTTON", false;
    Spinner = 13, "SPINNER", false;
    ProgressBar = 14, "PROGRESS_BAR", false;
    Advertisement = 15, "ADVERTISEMENT", false;
    Drawer = 16, "DRAWER", true;
    NavigationBar = 17, "NAVIGATION_BAR", true;
    Toolbar = 18, "TOOLBAR", true;
    ListItem = 19, "LIST_ITEM", true;
    CardView = 20, "CARD_VIEW", true;
    Container = 21, "CONTAINER", true;
    DatePicker = 22, "DATE_PICKER", false;
    NumberStepper = 23, "NUMBER_STEPPER", false;
}

impl ComponentClass {
    pub const COUNT: usize = 24;

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }
}

impl FromStr for ComponentClass {
    type Err = Error;

    /// Case-insensitive; spaces and hyphens are read as underscores, and a
    /// few common short forms (`NAVIGATION`, `CHECKBOX`, ...) are accepted.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| match c {
                ' ' | '-' => '_',
                c => c.to_ascii_uppercase(),
            })
            .collect();
        let alias = match norm.as_str() {
            "NAVIGATION" => "NAVIGATION_BAR",
            "CHECKBOX" => "CHECK_BOX",
            "DATEPICKER" => "DATE_PICKER",
            "TEXTINPUT" | "INPUT" => "TEXT_INPUT",
            "ICON" => "PICTOGRAM",
            "CARD" => "CARD_VIEW",
            other => other,
        };
        ComponentClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == alias)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

impl fmt::Display for ComponentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ComponentClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ComponentClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned box: top-left corner plus size, in normalized screen units.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const SCREEN: BBox = BBox {
        x: 0.0,
        y: 0.0,
        w: 1.0,
        h: 1.0,
    };

    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        BBox::new(a[0], a[1], a[2], a[3])
    }

    /// True when the box satisfies the ground-truth invariants.
    pub fn is_valid_ground_truth(&self) -> bool {
        self.w >= 0.0
            && self.h >= 0.0
            && self.x >= -SCREEN_EPS
            && self.y >= -SCREEN_EPS
            && self.right() <= 1.0 + SCREEN_EPS
            && self.bottom() <= 1.0 + SCREEN_EPS
    }

    /// Clamp into the unit screen: corner in `[0,1]`, size non-negative and
    /// not extending past the right/bottom edge.
    pub fn clamp_to_screen(&self) -> BBox {
        let x = self.x.clamp(0.0, 1.0);
        let y = self.y.clamp(0.0, 1.0);
        let w = self.w.max(0.0).min(1.0 - x);
        let h = self.h.max(0.0).min(1.0 - y);
        BBox { x, y, w, h }
    }

    pub fn scaled(&self, s: f64) -> BBox {
        BBox::new(self.x * s, self.y * s, self.w * s, self.h * s)
    }
}

/// Positional relation between two components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    Left,
    Right,
    Above,
    Below,
    Inside,
}

impl Predicate {
    pub const ALL: [Predicate; 5] = [
        Predicate::Left,
        Predicate::Right,
        Predicate::Above,
        Predicate::Below,
        Predicate::Inside,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Predicate::Left => "left",
            Predicate::Right => "right",
            Predicate::Above => "above",
            Predicate::Below => "below",
            Predicate::Inside => "inside",
        }
    }

    /// The relation seen from the object's side; `inside` has no inverse
    /// among the five predicates.
    pub fn reverse(self) -> Option<Predicate> {
        match self {
            Predicate::Left => Some(Predicate::Right),
            Predicate::Right => Some(Predicate::Left),
            Predicate::Above => Some(Predicate::Below),
            Predicate::Below => Some(Predicate::Above),
            Predicate::Inside => None,
        }
    }
}

impl FromStr for Predicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Predicate::Left),
            "right" => Ok(Predicate::Right),
            "above" | "top" => Ok(Predicate::Above),
            "below" | "bottom" => Ok(Predicate::Below),
            "inside" => Ok(Predicate::Inside),
            _ => Err(Error::UnknownPredicate(s.to_string())),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Predicate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentInstance {
    pub id: u32,
    pub class: ComponentClass,
    pub bbox: Option<BBox>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RelationTriplet {
    pub subject: u32,
    pub predicate: Predicate,
    pub object: u32,
}

impl RelationTriplet {
    pub fn new(subject: u32, predicate: Predicate, object: u32) -> Self {
        RelationTriplet {
            subject,
            predicate,
            object,
        }
    }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

pub fn area(b: &BBox) -> f64 {
    b.w.max(0.0) * b.h.max(0.0)
}

/// Overlap length of `[a0, a0+al]` and `[b0, b0+bl]`. When one interval
/// contains the other the contained length is returned as-is, so a child
/// fully inside its parent has an intersection equal to its own area bit
/// for bit.
fn overlap_1d(a0: f64, al: f64, b0: f64, bl: f64) -> f64 {
    let al = al.max(0.0);
    let bl = bl.max(0.0);
    let (a1, b1) = (a0 + al, b0 + bl);
    if a0 >= b0 && a1 <= b1 {
        return al;
    }
    if b0 >= a0 && b1 <= a1 {
        return bl;
    }
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    overlap_1d(a.x, a.w, b.x, b.w) * overlap_1d(a.y, a.h, b.y, b.h)
}

/// Fraction of `child` covered by `parent`. A zero-area child counts as
/// contained when it lies within the parent's closed extent.
pub fn containment_ratio(child: &BBox, parent: &BBox) -> f64 {
    let a = area(child);
    if a > 0.0 {
        return (intersection_area(child, parent) / a).clamp(0.0, 1.0);
    }
    let inside = child.x >= parent.x
        && child.x + child.w.max(0.0) <= parent.right()
        && child.y >= parent.y
        && child.y + child.h.max(0.0) <= parent.bottom();
    if inside {
        1.0
    } else {
        0.0
    }
}

/// `1 - |child ∩ parent| / |child|`; zero-area children cost nothing.
pub fn child_parent_loss(child: &BBox, parent: &BBox) -> f64 {
    let a = area(child);
    if a <= 0.0 {
        return 0.0;
    }
    (1.0 - intersection_area(child, parent) / a).clamp(0.0, 1.0)
}

/// `|c1 ∩ c2| / min(|c1|, |c2|)`; zero when either box is degenerate.
pub fn sibling_overlap_loss(c1: &BBox, c2: &BBox) -> f64 {
    let m = area(c1).min(area(c2));
    if m <= 0.0 {
        return 0.0;
    }
    (intersection_area(c1, c2) / m).clamp(0.0, 1.0)
}

/// Direction of the dominant center offset from `object` to `subject`.
/// Ties go to the vertical axis; identical centers give `above`.
pub fn directional_predicate(subject: &BBox, object: &BBox) -> Predicate {
    let (sx, sy) = subject.center();
    let (ox, oy) = object.center();
    let (dx, dy) = (sx - ox, sy - oy);
    if dx.abs() > dy.abs() {
        if dx < 0.0 {
            Predicate::Left
        } else {
            Predicate::Right
        }
    } else if dy > 0.0 {
        Predicate::Below
    } else {
        Predicate::Above
    }
}

pub fn derive_predicate(subject: &BBox, object: &BBox, containment_threshold: f64) -> Predicate {
    if containment_ratio(subject, object) >= containment_threshold {
        Predicate::Inside
    } else {
        directional_predicate(subject, object)
    }
}

pub fn relationship_satisfied(subject: &BBox, predicate: Predicate, object: &BBox) -> bool {
    let (sx, sy) = subject.center();
    let (ox, oy) = object.center();
    match predicate {
        Predicate::Inside => containment_ratio(subject, object) >= CONTAINMENT_THRESHOLD,
        Predicate::Left => sx < ox,
        Predicate::Right => sx > ox,
        Predicate::Above => sy < oy,
        Predicate::Below => sy > oy,
    }
}

// ---------------------------------------------------------------------------
// Layout trees
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct LayoutNode {
    pub instance: ComponentInstance,
    pub children: Vec<LayoutNode>,
}

impl LayoutNode {
    pub fn leaf(id: u32, class: ComponentClass, bbox: BBox) -> Self {
        LayoutNode {
            instance: ComponentInstance {
                id,
                class,
                bbox: Some(bbox),
            },
            children: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<LayoutNode>) -> Self {
        self.children = children;
        self
    }
}

/// A screen: the implicit ROOT (id 0, full screen) and its component
/// subtrees.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutTree {
    pub screen_id: String,
    pub width: u32,
    pub height: u32,
    pub children: Vec<LayoutNode>,
}

/// One non-root node of a tree, flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatComponent {
    pub instance: ComponentInstance,
    pub parent: u32,
    pub depth: usize,
}

impl LayoutTree {
    pub fn new(screen_id: impl Into<String>, children: Vec<LayoutNode>) -> Self {
        LayoutTree {
            screen_id: screen_id.into(),
            width: 1440,
            height: 2560,
            children,
        }
    }

    /// Pre-order flattening with parent ids (ROOT = 0) and depth (1 for
    /// top-level components).
    pub fn flatten(&self) -> Vec<FlatComponent> {
        fn walk(nodes: &[LayoutNode], parent: u32, depth: usize, out: &mut Vec<FlatComponent>) {
            for n in nodes {
                out.push(FlatComponent {
                    instance: n.instance.clone(),
                    parent,
                    depth,
                });
                walk(&n.children, n.instance.id, depth + 1, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.children, ROOT_ID, 1, &mut out);
        out
    }

    pub fn component_count(&self) -> usize {
        self.flatten().len()
    }

    pub fn unique_classes(&self) -> BTreeSet<ComponentClass> {
        self.flatten().iter().map(|c| c.instance.class).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in self.flatten() {
            if c.instance.id == ROOT_ID {
                return Err(Error::InvalidLayout(
                    "instance id 0 is reserved for ROOT".into(),
                ));
            }
            if !seen.insert(c.instance.id) {
                return Err(Error::InvalidLayout(format!(
                    "duplicate instance id {}",
                    c.instance.id
                )));
            }
            if let Some(b) = c.instance.bbox {
                if b.w < 0.0 || b.h < 0.0 {
                    return Err(Error::InvalidLayout(format!(
                        "negative size on component {}",
                        c.instance.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_layout(&self) -> Layout {
        let mut layout = Layout::default();
        for c in self.flatten() {
            if let Some(b) = c.instance.bbox {
                layout.insert(c.instance.id, c.instance.class, b, c.parent);
            }
        }
        layout
    }

    // --- JSON schema (pixel bounds) ---

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawScreen = serde_json::from_str(s)?;
        raw.into_tree(None)
    }

    /// Parse with an optional fallback for unknown class names; without one,
    /// unknown classes are rejected.
    pub fn from_json_str_with_fallback(s: &str, fallback: Option<ComponentClass>) -> Result<Self> {
        let raw: RawScreen = serde_json::from_str(s)?;
        raw.into_tree(fallback)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(RawScreen::from_tree(self)).expect("layout json")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&RawScreen::from_tree(self)).expect("layout json")
    }
}

#[derive(Serialize, Deserialize)]
struct RawScreen {
    screen_id: String,
    width: u32,
    height: u32,
    root: RawNode,
}

#[derive(Serialize, Deserialize)]
struct RawNode {
    class: String,
    id: u32,
    bounds: [f64; 4],
    #[serde(default)]
    children: Vec<RawNode>,
}

impl RawScreen {
    fn into_tree(self, fallback: Option<ComponentClass>) -> Result<LayoutTree> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidLayout(
                "screen width/height must be positive".into(),
            ));
        }
        if self.root.id != ROOT_ID {
            return Err(Error::InvalidLayout(format!(
                "root id must be 0, got {}",
                self.root.id
            )));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        let convert = |node: &RawNode| -> Result<BBox> {
            let [l, t, r, b] = node.bounds;
            if r < l || b < t {
                return Err(Error::InvalidLayout(format!(
                    "malformed bounds {:?} on component {}",
                    node.bounds, node.id
                )));
            }
            Ok(BBox::new(l / w, t / h, (r - l) / w, (b - t) / h))
        };
        fn build(
            node: RawNode,
            convert: &dyn Fn(&RawNode) -> Result<BBox>,
            fallback: Option<ComponentClass>,
        ) -> Result<LayoutNode> {
            let bbox = convert(&node)?;
            let class = match node.class.parse::<ComponentClass>() {
                Ok(c) => c,
                Err(e) => fallback.ok_or(e)?,
            };
            let children = node
                .children
                .into_iter()
                .map(|c| build(c, convert, fallback))
                .collect::<Result<Vec<_>>>()?;
            Ok(LayoutNode {
                instance: ComponentInstance {
                    id: node.id,
                    class,
                    bbox: Some(bbox),
                },
                children,
            })
        }
        // Root bounds are validated but the root box is always the full screen.
        convert(&self.root)?;
        let children = self
            .root
            .children
            .into_iter()
            .map(|c| build(c, &convert, fallback))
            .collect::<Result<Vec<_>>>()?;
        let tree = LayoutTree {
            screen_id: self.screen_id,
            width: self.width,
            height: self.height,
            children,
        };
        tree.validate()?;
        Ok(tree)
    }

    fn from_tree(tree: &LayoutTree) -> RawScreen {
        let (w, h) = (tree.width as f64, tree.height as f64);
        let px = |v: f64, scale: f64| {
            let p = v * scale;
            if (p - p.round()).abs() < 1e-6 {
                p.round()
            } else {
                p
            }
        };
        fn node(n: &LayoutNode, px: &dyn Fn(f64, f64) -> f64, w: f64, h: f64) -> RawNode {
            let b = n.instance.bbox.unwrap_or_default();
            RawNode {
                class: n.instance.class.name().to_string(),
                id: n.instance.id,
                bounds: [px(b.x, w), px(b.y, h), px(b.right(), w), px(b.bottom(), h)],
                children: n.children.iter().map(|c| node(c, px, w, h)).collect(),
            }
        }
        RawScreen {
            screen_id: tree.screen_id.clone(),
            width: tree.width,
            height: tree.height,
            root: RawNode {
                class: "ROOT".into(),
                id: ROOT_ID,
                bounds: [0.0, 0.0, w, h],
                children: tree.children.iter().map(|c| node(c, &px, w, h)).collect(),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Flat layouts (ground truth or generated)
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlacedComponent {
    pub class: ComponentClass,
    pub bbox: BBox,
    /// Parent instance id; ROOT is 0.
    pub parent: u32,
}

/// A set of placed components keyed by instance id, with parent links.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Layout {
    pub components: BTreeMap<u32, PlacedComponent>,
}

impl Layout {
    pub fn insert(&mut self, id: u32, class: ComponentClass, bbox: BBox, parent: u32) {
        self.components.insert(
            id,
            PlacedComponent {
                class,
                bbox,
                parent,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn bbox(&self, id: u32) -> Option<BBox> {
        if id == ROOT_ID {
            return Some(BBox::SCREEN);
        }
        self.components.get(&id).map(|c| c.bbox)
    }

    /// Depth below ROOT (top-level = 1). Parent cycles are cut at the
    /// component count.
    pub fn depth(&self, id: u32) -> usize {
        let mut depth = 0;
        let mut cur = id;
        while cur != ROOT_ID && depth <= self.components.len() {
            match self.components.get(&cur) {
                Some(c) => {
                    depth += 1;
                    cur = c.parent;
                }
                None => break,
            }
        }
        depth
    }

    /// (child, parent) pairs whose parent is a placed component.
    pub fn child_parent_pairs(&self) -> Vec<(u32, u32)> {
        self.components
            .iter()
            .filter(|(_, c)| c.parent != ROOT_ID && self.components.contains_key(&c.parent))
            .map(|(&id, c)| (id, c.parent))
            .collect()
    }

    /// Unordered pairs of components sharing a parent (ROOT included).
    pub fn sibling_pairs(&self) -> Vec<(u32, u32)> {
        let mut groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (&id, c) in &self.components {
            groups.entry(c.parent).or_default().push(id);
        }
        let mut pairs = Vec::new();
        for ids in groups.values() {
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    pairs.push((a, b));
                }
            }
        }
        pairs
    }

    pub fn unique_classes(&self) -> BTreeSet<ComponentClass> {
        self.components.values().map(|c| c.class).collect()
    }
}

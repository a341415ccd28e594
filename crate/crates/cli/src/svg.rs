//! Wireframe rendering of layouts.

use std::fmt::Write;

use guilget_core::layout::{ComponentClass, Layout};

pub const VIEWPORT_W: f64 = 360.0;
pub const VIEWPORT_H: f64 = 640.0;

/// Fill colour for a class. Containers get pale fills so nested widgets
/// stay visible on top of them.
pub fn class_color(class: ComponentClass) -> &'static str {
    const WIDGET: [&str; 8] = [
        "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    ];
    const CONTAINER: [&str; 4] = ["#e8eef5", "#f3ece2", "#e9f2e7", "#f1e8f0"];
    if class.is_container() {
        CONTAINER[class.id() % CONTAINER.len()]
    } else {
        WIDGET[class.id() % WIDGET.len()]
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// One labelled rectangle per component, drawn shallow to deep (ties by
/// id) so children sit on top of their containers.
pub fn render_svg(layout: &Layout, color: impl Fn(ComponentClass) -> &'static str) -> String {
    let mut order: Vec<(usize, u32)> = layout
        .components
        .keys()
        .map(|&id| (layout.depth(id), id))
        .collect();
    order.sort_unstable();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = VIEWPORT_W,
        h = VIEWPORT_H
    );
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{VIEWPORT_W}" height="{VIEWPORT_H}" fill="#ffffff" stroke="#333333"/>"##
    );
    for (_, id) in order {
        let c = &layout.components[&id];
        let b = c.bbox;
        let (x, y) = (b.x * VIEWPORT_W, b.y * VIEWPORT_H);
        let (w, h) = (b.w * VIEWPORT_W, b.h * VIEWPORT_H);
        let _ = writeln!(
            s,
            r##"<g data-id="{id}"><rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" fill-opacity="0.85" stroke="#333333" stroke-width="0.8"/><text x="{tx:.2}" y="{ty:.2}" font-family="sans-serif" font-size="8" fill="#111111">{label}</text></g>"##,
            fill = color(c.class),
            tx = x + 2.0,
            ty = y + 9.0,
            label = esc(c.class.name()),
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use guilget_core::layout::BBox;

    fn layout() -> Layout {
        let mut l = Layout::default();
        l.insert(2, ComponentClass::Button, BBox::new(0.1, 0.1, 0.2, 0.1), 1);
        l.insert(
            1,
            ComponentClass::Container,
            BBox::new(0.0, 0.0, 0.5, 0.5),
            0,
        );
        l
    }

    #[test]
    fn one_component_one_rect() {
        let mut l = Layout::default();
        l.insert(1, ComponentClass::Image, BBox::new(0.25, 0.5, 0.5, 0.25), 0);
        let svg = render_svg(&l, class_color);
        // Background plus the component.
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains(r#"x="90.00" y="320.00" width="180.00" height="160.00""#));
        assert!(svg.contains(">IMAGE</text>"));
    }

    #[test]
    fn parents_drawn_before_children() {
        let svg = render_svg(&layout(), class_color);
        let parent = svg.find(r#"data-id="1""#).unwrap();
        let child = svg.find(r#"data-id="2""#).unwrap();
        assert!(parent < child);
        assert_eq!(svg, render_svg(&layout(), class_color));
    }
}

//! Deterministic SVG figure: sample points coloured by split label plus the
//! boundary rings of the estimate.

use std::fmt::Write as _;

use levelset::geometry::ArcPolygonBoundary;
use levelset::splitter::Label;
use levelset::{BBox, Point};

const WIDTH: f64 = 800.0;

fn color(label: Label) -> &'static str {
    match label {
        Label::Plus => "#c0392b",
        Label::Minus => "#2c6fbb",
        Label::Unassigned => "#9a9a9a",
    }
}

fn class(label: Label) -> &'static str {
    match label {
        Label::Plus => "plus",
        Label::Minus => "minus",
        Label::Unassigned => "unassigned",
    }
}

/// One `<circle class="pt ...">` per point and one `<path>` holding every
/// flattened ring (even-odd fill, so holes show).
pub fn render_svg(
    window: BBox,
    points: &[Point],
    labels: &[Label],
    boundary: &ArcPolygonBoundary,
    chord_tol: f64,
) -> String {
    let scale = WIDTH / window.width().max(window.height()).max(f64::MIN_POSITIVE);
    let (w, h) = (window.width() * scale, window.height() * scale);
    let map = |p: Point| ((p.x - window.xmin) * scale, (window.ymax - p.y) * scale);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let mut d = String::new();
    for ring in &boundary.rings {
        if ring.is_point() {
            continue;
        }
        let poly = ring.flatten(chord_tol);
        for (i, &p) in poly.iter().enumerate() {
            let (x, y) = map(p);
            let _ = write!(d, "{}{x:.3},{y:.3} ", if i == 0 { "M" } else { "L" });
        }
        d.push_str("Z ");
    }
    let _ = writeln!(
        s,
        r##"<path class="boundary" d="{}" fill="#f5b041" fill-opacity="0.35" fill-rule="evenodd" stroke="#1b1b1b" stroke-width="1.5"/>"##,
        d.trim_end()
    );
    let _ = writeln!(s, r#"<g class="points">"#);
    for (&p, &l) in points.iter().zip(labels) {
        let (x, y) = map(p);
        let _ = writeln!(
            s,
            r#"<circle class="pt {}" cx="{x:.3}" cy="{y:.3}" r="2.2" fill="{}"/>"#,
            class(l),
            color(l)
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

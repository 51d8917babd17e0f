//! Arc-polygon boundaries: rings of line segments and circular arcs.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

use crate::point::{BBox, Point};

/// One piece of a boundary ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Element {
    Segment {
        from: Point,
        to: Point,
    },
    /// Circular arc from `start_angle` to `end_angle`; `ccw` gives the
    /// sweep direction. Sweeps are always shorter than a full turn.
    Arc {
        center: Point,
        radius: f64,
        start_angle: f64,
        end_angle: f64,
        ccw: bool,
    },
}

impl Element {
    /// Arc on the circle `center`/`radius` from `from` to `to` along the
    /// minor side, i.e. with |sweep| <= pi.
    pub fn minor_arc(center: Point, radius: f64, from: Point, to: Point) -> Element {
        let a = from - center;
        let b = to - center;
        let sweep = a.cross(b).atan2(a.dot(b));
        Element::Arc {
            center,
            radius,
            start_angle: a.y.atan2(a.x),
            end_angle: b.y.atan2(b.x),
            ccw: sweep >= 0.0,
        }
    }

    pub fn start(&self) -> Point {
        match *self {
            Element::Segment { from, .. } => from,
            Element::Arc {
                center,
                radius,
                start_angle,
                ..
            } => polar(center, radius, start_angle),
        }
    }

    pub fn end(&self) -> Point {
        match *self {
            Element::Segment { to, .. } => to,
            Element::Arc {
                center,
                radius,
                end_angle,
                ..
            } => polar(center, radius, end_angle),
        }
    }

    /// Point halfway along the element.
    pub fn midpoint(&self) -> Point {
        match *self {
            Element::Segment { from, to } => (from + to) * 0.5,
            Element::Arc {
                center,
                radius,
                start_angle,
                ..
            } => {
                let a = start_angle + 0.5 * self.sweep();
                Point::new(center.x + radius * a.cos(), center.y + radius * a.sin())
            }
        }
    }

    /// Signed angular sweep of an arc (zero for segments).
    pub fn sweep(&self) -> f64 {
        match *self {
            Element::Segment { .. } => 0.0,
            Element::Arc {
                start_angle,
                end_angle,
                ccw,
                ..
            } => {
                let d = (end_angle - start_angle).rem_euclid(TAU);
                if ccw { d } else if d == 0.0 { 0.0 } else { d - TAU }
            }
        }
    }

    /// Contribution to the ring's signed area, `1/2 ∮ x dy - y dx`.
    pub fn area_term(&self) -> f64 {
        match *self {
            Element::Segment { from, to } => 0.5 * from.cross(to),
            Element::Arc {
                center,
                radius,
                start_angle,
                ..
            } => {
                let t0 = start_angle;
                let t1 = start_angle + self.sweep();
                0.5 * (radius * radius * (t1 - t0)
                    + radius * center.x * (t1.sin() - t0.sin())
                    - radius * center.y * (t1.cos() - t0.cos()))
            }
        }
    }

    /// Unit direction of travel at the start of the element.
    pub fn start_tangent(&self) -> Point {
        match *self {
            Element::Segment { from, to } => unit(to - from),
            Element::Arc { center, .. } => {
                let t = unit((self.start() - center).perp());
                if self.sweep() >= 0.0 { t } else { t * -1.0 }
            }
        }
    }

    /// Unit direction of travel at the end of the element.
    pub fn end_tangent(&self) -> Point {
        match *self {
            Element::Segment { from, to } => unit(to - from),
            Element::Arc { center, .. } => {
                let t = unit((self.end() - center).perp());
                if self.sweep() >= 0.0 { t } else { t * -1.0 }
            }
        }
    }

    /// Polyline approximation with maximum sagitta `chord_tol`, excluding
    /// the final endpoint. Arcs always yield at least two chords.
    pub fn flatten_into(&self, chord_tol: f64, out: &mut Vec<Point>) {
        match *self {
            Element::Segment { from, .. } => out.push(from),
            Element::Arc {
                center,
                radius,
                start_angle,
                ..
            } => {
                let sweep = self.sweep();
                let ratio = (1.0 - chord_tol / radius).clamp(-1.0, 1.0);
                let max_step = (2.0 * ratio.acos()).max(1e-6);
                let steps = ((sweep.abs() / max_step).ceil() as usize).clamp(2, 100_000);
                for k in 0..steps {
                    let t = start_angle + sweep * k as f64 / steps as f64;
                    out.push(polar(center, radius, t));
                }
            }
        }
    }
}

fn polar(center: Point, radius: f64, angle: f64) -> Point {
    Point::new(center.x + radius * angle.cos(), center.y + radius * angle.sin())
}

fn unit(v: Point) -> Point {
    let n = v.norm();
    if n > 0.0 { v * (1.0 / n) } else { v }
}

/// A closed boundary ring. Outer rings run counterclockwise and holes
/// clockwise, so the enclosed region is always on the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub elements: Vec<Element>,
}

impl Ring {
    pub fn signed_area(&self) -> f64 {
        self.elements.iter().map(Element::area_term).sum()
    }

    /// True for the single-vertex ring used for isolated points.
    pub fn is_point(&self) -> bool {
        matches!(self.elements.as_slice(), [Element::Segment { from, to }] if from == to)
    }

    pub fn is_closed(&self, tol: f64) -> bool {
        let Some(first) = self.elements.first() else {
            return false;
        };
        let mut prev = self.elements.last().unwrap().end();
        if prev.dist(first.start()) > tol {
            return false;
        }
        for e in &self.elements {
            if e.start().dist(prev) > tol {
                return false;
            }
            prev = e.end();
        }
        true
    }

    /// Closed polyline (first vertex repeated at the end).
    pub fn flatten(&self, chord_tol: f64) -> Vec<Point> {
        let mut pts = Vec::new();
        for e in &self.elements {
            e.flatten_into(chord_tol, &mut pts);
        }
        if let Some(&p) = pts.first() {
            pts.push(p);
        }
        pts
    }
}

/// Boundary of a planar region made of segment/arc rings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcPolygonBoundary {
    pub rings: Vec<Ring>,
    /// Radius of every arc; `None` for segment-only (convex) boundaries.
    pub radius: Option<f64>,
}

impl ArcPolygonBoundary {
    /// Total enclosed area (holes subtract).
    pub fn area(&self) -> f64 {
        self.rings.iter().map(Ring::signed_area).sum()
    }

    pub fn bbox(&self) -> Option<BBox> {
        let pts: Vec<Point> = self.rings.iter().flat_map(|r| r.flatten(1e-3)).collect();
        (!pts.is_empty()).then(|| BBox::of_points(&pts))
    }

    /// Even-odd membership against the flattened rings.
    pub fn contains_flattened(&self, q: Point, chord_tol: f64) -> bool {
        self.rings
            .iter()
            .filter(|r| !r.is_point())
            .map(|r| r.flatten(chord_tol))
            .filter(|poly| crossing_test(poly, q))
            .count()
            % 2
            == 1
    }

    pub fn to_native_json(&self) -> Value {
        json!({ "type": "ArcPolygonBoundary", "radius": self.radius, "rings": self.rings })
    }

    /// GeoJSON `FeatureCollection` with arcs flattened at `chord_tol`.
    /// Counterclockwise rings become polygon shells; each clockwise ring is
    /// attached as a hole of the smallest shell containing it.
    pub fn to_geojson(&self, chord_tol: f64) -> Value {
        let mut shells: Vec<(f64, Vec<Point>)> = Vec::new();
        let mut holes: Vec<Vec<Point>> = Vec::new();
        let mut points: Vec<Point> = Vec::new();
        for ring in &self.rings {
            if ring.is_point() {
                points.push(ring.elements[0].start());
                continue;
            }
            let area = ring.signed_area();
            let poly = ring.flatten(chord_tol);
            if area >= 0.0 {
                shells.push((area, poly));
            } else {
                holes.push(poly);
            }
        }
        let mut attached: BTreeMap<usize, Vec<Vec<Point>>> = BTreeMap::new();
        for hole in holes {
            let probe = hole[0];
            let owner = shells
                .iter()
                .enumerate()
                .filter(|(_, (_, s))| crossing_test(s, probe) || on_polyline(s, probe))
                .min_by(|a, b| a.1.0.total_cmp(&b.1.0))
                .map(|(i, _)| i);
            if let Some(i) = owner {
                attached.entry(i).or_default().push(hole);
            }
        }
        let coords = |poly: &[Point]| -> Value {
            Value::Array(poly.iter().map(|p| json!([p.x, p.y])).collect())
        };
        let mut features = Vec::new();
        for (i, (_, shell)) in shells.iter().enumerate() {
            let mut rings = vec![coords(shell)];
            for h in attached.get(&i).into_iter().flatten() {
                rings.push(coords(h));
            }
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": rings },
                "properties": { "kind": "region" }
            }));
        }
        for p in points {
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [p.x, p.y] },
                "properties": { "kind": "isolated_generator" }
            }));
        }
        json!({ "type": "FeatureCollection", "features": features })
    }
}

/// Even-odd ray crossing test against a closed polyline.
pub(crate) fn crossing_test(poly: &[Point], q: Point) -> bool {
    let mut inside = false;
    for w in poly.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > q.y) != (b.y > q.y) {
            let x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if x > q.x {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_polyline(poly: &[Point], q: Point) -> bool {
    poly.iter().any(|&p| p.dist(q) < 1e-9)
}

/// A directed boundary arc between two generator sites.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SiteArc {
    pub from: usize,
    pub to: usize,
    pub element: Element,
}

/// Chains directed site-to-site elements into closed rings. Each element is
/// followed by the outgoing element at its end vertex that comes first
/// clockwise from the reversed incoming direction, which keeps rings that
/// pinch at a shared vertex separate.
pub(crate) fn trace_rings(arcs: &[SiteArc]) -> Vec<Ring> {
    let mut outgoing: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, a) in arcs.iter().enumerate() {
        outgoing.entry(a.from).or_default().push(k);
    }
    let next: Vec<Option<usize>> = arcs
        .iter()
        .map(|a| {
            let reference = a.element.end_tangent() * -1.0;
            outgoing.get(&a.to).and_then(|ks| {
                ks.iter().copied().min_by(|&x, &y| {
                    let tx = clockwise_angle(reference, arcs[x].element.start_tangent());
                    let ty = clockwise_angle(reference, arcs[y].element.start_tangent());
                    tx.total_cmp(&ty).then(x.cmp(&y))
                })
            })
        })
        .collect();

    let mut used = vec![false; arcs.len()];
    let mut rings = Vec::new();
    for start in 0..arcs.len() {
        if used[start] {
            continue;
        }
        let mut elements = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            elements.push(arcs[cur].element);
            match next[cur] {
                Some(k) if k != start && !used[k] => cur = k,
                _ => break,
            }
        }
        rings.push(Ring { elements });
    }
    rings
}

/// Clockwise rotation in (0, 2pi] taking `from` onto `to`.
fn clockwise_angle(from: Point, to: Point) -> f64 {
    let ccw = from.cross(to).atan2(from.dot(to));
    let cw = (-ccw).rem_euclid(TAU);
    if cw <= 1e-12 { TAU } else { cw }
}

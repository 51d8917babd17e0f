//! Convex hulls and tolerant point-in-convex-polygon tests.

use crate::geometry::boundary::{ArcPolygonBoundary, Element, Ring};
use crate::point::{Point, PointCloud};

/// Indices of the convex-hull vertices in counterclockwise order, starting
/// from the lowest-leftmost point. Collinear boundary points are dropped.
pub fn convex_hull_indices(points: &[Point]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (points[i], points[j]);
        a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
    });
    order.dedup_by(|a, b| points[*a] == points[*b]);
    if order.len() <= 2 {
        return order;
    }
    let turn = |o: usize, a: usize, b: usize| (points[a] - points[o]).cross(points[b] - points[o]);
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for &i in &order {
        while hull.len() >= 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    let lower = hull.len() + 1;
    for &i in order.iter().rev().skip(1) {
        while hull.len() >= lower && turn(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    // all-collinear input collapses to its two extremes
    if hull.len() == 2 && hull[0] == hull[1] {
        hull.pop();
    }
    hull
}

/// Convex hull of a cloud as a segment-only counterclockwise ring. A single
/// distinct point gives a zero-length single-segment ring.
pub fn convex_hull(cloud: &PointCloud) -> ArcPolygonBoundary {
    let pts = cloud.points();
    let idx = convex_hull_indices(pts);
    let ring = if idx.len() == 1 {
        Ring {
            elements: vec![Element::Segment {
                from: pts[idx[0]],
                to: pts[idx[0]],
            }],
        }
    } else {
        Ring {
            elements: (0..idx.len())
                .map(|k| Element::Segment {
                    from: pts[idx[k]],
                    to: pts[idx[(k + 1) % idx.len()]],
                })
                .collect(),
        }
    };
    ArcPolygonBoundary {
        rings: vec![ring],
        radius: None,
    }
}

/// Closed convex polygon with counterclockwise vertices.
#[derive(Debug, Clone)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn of_points(points: &[Point]) -> Self {
        let idx = convex_hull_indices(points);
        Self {
            vertices: idx.into_iter().map(|i| points[i]).collect(),
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        (0..v.len())
            .map(|i| v[i].cross(v[(i + 1) % v.len()]))
            .sum::<f64>()
            * 0.5
    }

    /// Distance from `q` to the polygon outline.
    pub fn boundary_distance(&self, q: Point) -> f64 {
        let n = self.vertices.len();
        match n {
            0 => f64::INFINITY,
            1 => self.vertices[0].dist(q),
            _ => (0..n)
                .map(|i| segment_distance(self.vertices[i], self.vertices[(i + 1) % n], q))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Membership in the closed polygon, accepting points within `eps` of it.
    pub fn contains(&self, q: Point, eps: f64) -> bool {
        match self.vertices.len() {
            0 => false,
            1 => self.vertices[0].dist(q) <= eps,
            2 => segment_distance(self.vertices[0], self.vertices[1], q) <= eps,
            n => (0..n).all(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let e = b - a;
                e.cross(q - a) >= -eps * e.norm()
            }),
        }
    }
}

pub(crate) fn segment_distance(a: Point, b: Point, q: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return a.dist(q);
    }
    let t = ((q - a).dot(ab) / len2).clamp(0.0, 1.0);
    (a + ab * t).dist(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_center_excludes_center() {
        let c = PointCloud::from_xy(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)])
            .unwrap();
        let hull = convex_hull(&c);
        assert_eq!(hull.rings[0].elements.len(), 4);
        assert!((hull.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_point_hull_is_degenerate_ring() {
        let c = PointCloud::from_xy(&[(2.0, 3.0), (2.0, 3.0)]).unwrap();
        let hull = convex_hull(&c);
        assert!(hull.rings[0].is_point());
        assert_eq!(hull.area(), 0.0);
    }

    #[test]
    fn all_points_on_circle_are_extreme() {
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 100.0;
                (t.cos(), t.sin())
            })
            .collect();
        let c = PointCloud::from_xy(&pts).unwrap();
        assert_eq!(convex_hull_indices(c.points()).len(), 100);
        assert!(convex_hull(&c).rings[0].signed_area() > 0.0);
    }

    #[test]
    fn collinear_points_reduce_to_extremes() {
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(2.0, 2.0)];
        let idx = convex_hull_indices(&pts);
        assert_eq!(idx.len(), 2);
        let poly = ConvexPolygon::of_points(&pts);
        assert!(poly.contains(Point::new(1.5, 1.5), 1e-9));
        assert!(!poly.contains(Point::new(1.5, 1.4), 1e-9));
    }

    #[test]
    fn tolerant_membership_on_edges() {
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let poly = ConvexPolygon::of_points(&pts);
        assert!(poly.contains(Point::new(0.5, 0.0), 0.0));
        assert!(poly.contains(Point::new(0.5, -1e-10), 1e-9));
        assert!(!poly.contains(Point::new(0.5, -1e-8), 1e-9));
    }
}

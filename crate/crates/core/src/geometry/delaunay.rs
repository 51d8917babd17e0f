//! Delaunay triangulation of distinct sites and its Voronoi dual.

use delaunator::EMPTY;

use crate::error::{Error, Result};
use crate::point::Point;

/// A Voronoi edge: a finite segment between two circumcenters, or a ray
/// leaving a circumcenter across a convex-hull edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VoronoiEdge {
    Segment { sites: (usize, usize), from: Point, to: Point },
    Ray { sites: (usize, usize), from: Point, direction: Point },
}

/// Delaunay triangulation over distinct sites.
///
/// Collinear inputs (and inputs with fewer than three sites) produce no
/// triangles and are flagged degenerate; their Delaunay edges are then the
/// consecutive pairs along the supporting line, which is still the exact
/// Voronoi neighbour relation.
#[derive(Debug, Clone)]
pub struct Triangulation {
    sites: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    halfedges: Vec<usize>,
    edges: Vec<(usize, usize)>,
    degenerate: bool,
}

impl Triangulation {
    /// Triangulates `sites`, which must be pairwise distinct.
    pub fn new(sites: &[Point]) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::EmptyInput("triangulation needs at least one site"));
        }
        let pts: Vec<delaunator::Point> = sites
            .iter()
            .map(|p| delaunator::Point { x: p.x, y: p.y })
            .collect();
        let tri = if sites.len() >= 3 {
            delaunator::triangulate(&pts)
        } else {
            delaunator::Triangulation {
                triangles: vec![],
                halfedges: vec![],
                hull: vec![],
            }
        };

        if tri.triangles.is_empty() {
            return Ok(Self {
                sites: sites.to_vec(),
                triangles: vec![],
                halfedges: vec![],
                edges: collinear_chain(sites),
                degenerate: true,
            });
        }

        let triangles: Vec<[usize; 3]> = tri
            .triangles
            .chunks_exact(3)
            .map(|t| [t[0], t[1], t[2]])
            .collect();
        let mut edges = Vec::with_capacity(tri.triangles.len() / 2 + tri.hull.len());
        for e in 0..tri.triangles.len() {
            let twin = tri.halfedges[e];
            if twin == EMPTY || e < twin {
                let a = tri.triangles[e];
                let b = tri.triangles[next_halfedge(e)];
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            sites: sites.to_vec(),
            triangles,
            halfedges: tri.halfedges,
            edges,
            degenerate: false,
        })
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Undirected Delaunay edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Voronoi vertices, one circumcenter per triangle.
    pub fn voronoi_vertices(&self) -> Vec<Point> {
        self.triangles
            .iter()
            .map(|t| circumcenter(self.sites[t[0]], self.sites[t[1]], self.sites[t[2]]))
            .collect()
    }

    /// Voronoi edges dual to the Delaunay edges of a non-degenerate triangulation.
    pub fn voronoi_edges(&self) -> Vec<VoronoiEdge> {
        let centers = self.voronoi_vertices();
        let flat: Vec<usize> = self.triangles.iter().flatten().copied().collect();
        let mut out = Vec::new();
        for e in 0..flat.len() {
            let twin = self.halfedges[e];
            let a = flat[e];
            let b = flat[next_halfedge(e)];
            if twin == EMPTY {
                // hull edge a->b is counterclockwise; the cell boundary runs outward (to the right)
                let d = self.sites[b] - self.sites[a];
                out.push(VoronoiEdge::Ray {
                    sites: (a, b),
                    from: centers[e / 3],
                    direction: Point::new(d.y, -d.x),
                });
            } else if e < twin {
                out.push(VoronoiEdge::Segment {
                    sites: (a, b),
                    from: centers[e / 3],
                    to: centers[twin / 3],
                });
            }
        }
        out
    }
}

fn next_halfedge(e: usize) -> usize {
    if e % 3 == 2 { e - 2 } else { e + 1 }
}

pub fn circumcenter(a: Point, b: Point, c: Point) -> Point {
    let ab = b - a;
    let ac = c - a;
    let d = 2.0 * ab.cross(ac);
    let ab2 = ab.dot(ab);
    let ac2 = ac.dot(ac);
    Point::new(
        a.x + (ac.y * ab2 - ab.y * ac2) / d,
        a.y + (ab.x * ac2 - ac.x * ab2) / d,
    )
}

fn collinear_chain(sites: &[Point]) -> Vec<(usize, usize)> {
    if sites.len() < 2 {
        return vec![];
    }
    // project on the direction between the two farthest-apart extremes
    let (lo, hi) = extreme_pair(sites);
    let dir = sites[hi] - sites[lo];
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|&i, &j| {
        let ti = (sites[i] - sites[lo]).dot(dir);
        let tj = (sites[j] - sites[lo]).dot(dir);
        ti.total_cmp(&tj).then(i.cmp(&j))
    });
    let mut edges: Vec<(usize, usize)> = order
        .windows(2)
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
        .collect();
    edges.sort_unstable();
    edges
}

fn extreme_pair(sites: &[Point]) -> (usize, usize) {
    let key = |p: &Point| (p.x, p.y);
    let lo = (0..sites.len())
        .min_by(|&i, &j| key(&sites[i]).partial_cmp(&key(&sites[j])).unwrap())
        .unwrap();
    let hi = (0..sites.len())
        .max_by(|&i, &j| key(&sites[i]).partial_cmp(&key(&sites[j])).unwrap())
        .unwrap();
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle_has_circumcenter_vertex() {
        let sites = [Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(0.0, 2.0)];
        let t = Triangulation::new(&sites).unwrap();
        assert!(!t.is_degenerate());
        assert_eq!(t.triangles().len(), 1);
        let v = t.voronoi_vertices();
        assert_eq!(v.len(), 1);
        assert!((v[0].x - 1.0).abs() < 1e-12 && (v[0].y - 1.0).abs() < 1e-12);
        assert_eq!(t.edges().len(), 3);
    }

    #[test]
    fn unit_square_has_two_triangles_with_shared_circumcenter() {
        let sites = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let t = Triangulation::new(&sites).unwrap();
        assert_eq!(t.triangles().len(), 2);
        for c in t.voronoi_vertices() {
            assert!((c.x - 0.5).abs() < 1e-12 && (c.y - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_sites_are_chained_in_order() {
        let sites = [Point::new(2.0, 2.0), Point::new(0.0, 0.0), Point::new(1.0, 1.0)];
        let t = Triangulation::new(&sites).unwrap();
        assert!(t.is_degenerate());
        assert_eq!(t.edges(), &[(0, 2), (1, 2)]);
        assert!(Triangulation::new(&[]).is_err());
        assert!(Triangulation::new(&sites[..1]).unwrap().edges().is_empty());
    }

    #[test]
    fn voronoi_edges_cover_every_delaunay_edge() {
        let sites = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.1),
            Point::new(0.4, 1.0),
            Point::new(1.3, 1.2),
            Point::new(0.6, 0.5),
        ];
        let t = Triangulation::new(&sites).unwrap();
        assert_eq!(t.voronoi_edges().len(), t.edges().len());
    }
}

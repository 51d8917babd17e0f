//! Exact membership in the r-convex hull of a finite planar point set.
//!
//! A point `q` lies outside `C_r(S)` iff some open ball of radius `r` around
//! `q`'s neighbourhood is free of sites, i.e. iff the set of feasible
//! centers `F = {c : min_i |c - s_i| >= r}` comes within distance `r` of
//! `q`. The boundary of `F` is made of arcs of the circles of radius `r`
//! around the sites, joined at vertices that are the empty circle
//! intersections of Delaunay neighbours. The point of `F` nearest to `q` is
//! therefore `q` itself, one of those vertices, or the radial projection of
//! `q` onto a site circle inside one of its feasible arcs. All three
//! candidate families are precomputed per radius.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::boundary::{ArcPolygonBoundary, Element, Ring, SiteArc, trace_rings};
use crate::geometry::delaunay::Triangulation;
use crate::geometry::hull::ConvexPolygon;
use crate::geometry::raster::RasterMask;
use crate::point::{BBox, Point, PointCloud, dedup_points};

/// Relative tolerance factor for geometric predicates.
pub const EPS_GEOM_REL: f64 = 1e-9;

/// Distinct generator sites with their triangulation and search tree,
/// shared by regions of every radius over the same generators.
#[derive(Debug)]
pub struct SiteSet {
    sites: Vec<Point>,
    input_len: usize,
    triangulation: Triangulation,
    tree: PointIndex,
    hull: ConvexPolygon,
    bbox: BBox,
    eps: f64,
}

impl SiteSet {
    pub fn new(generators: &PointCloud) -> Result<Self> {
        Self::from_points(generators.points())
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("r-convex hull needs at least one generator"));
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let sites = dedup_points(points);
        let triangulation = Triangulation::new(&sites)?;
        let bbox = BBox::of_points(&sites);
        let scale = if bbox.diameter() > 0.0 {
            bbox.diameter()
        } else {
            sites[0].norm().max(1.0)
        };
        Ok(Self {
            tree: PointIndex::new(&sites),
            hull: ConvexPolygon::of_points(&sites),
            triangulation,
            bbox,
            eps: EPS_GEOM_REL * scale,
            input_len: points.len(),
            sites,
        })
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn duplicate_count(&self) -> usize {
        self.input_len - self.sites.len()
    }

    pub fn triangulation(&self) -> &Triangulation {
        &self.triangulation
    }

    pub fn hull(&self) -> &ConvexPolygon {
        &self.hull
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// Geometric tolerance `1e-9 x` bounding-box diameter.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn nearest_distance(&self, q: Point) -> f64 {
        self.tree.nearest_distance(q)
    }
}

/// `C_r(S)` for a finite radius, or `conv(S)` when the radius is infinite.
#[derive(Debug, Clone)]
pub struct RConvexRegion {
    sites: Arc<SiteSet>,
    radius: f64,
    centers: Option<Arc<FeasibleCenters>>,
}

impl RConvexRegion {
    pub fn new(generators: &PointCloud, radius: f64) -> Result<Self> {
        Self::with_sites(Arc::new(SiteSet::new(generators)?), radius)
    }

    /// Region over prepared sites; `radius` may be `f64::INFINITY`.
    pub fn with_sites(sites: Arc<SiteSet>, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("must be positive, got {radius}"),
            });
        }
        let centers = radius
            .is_finite()
            .then(|| Arc::new(FeasibleCenters::build(&sites, radius)));
        Ok(Self {
            sites,
            radius,
            centers,
        })
    }

    pub fn convex(generators: &PointCloud) -> Result<Self> {
        Self::new(generators, f64::INFINITY)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_convex(&self) -> bool {
        self.radius.is_infinite()
    }

    pub fn site_set(&self) -> &Arc<SiteSet> {
        &self.sites
    }

    pub fn generators(&self) -> &[Point] {
        self.sites.sites()
    }

    /// True when the generators are collinear or fewer than three.
    pub fn is_degenerate(&self) -> bool {
        self.sites.triangulation.is_degenerate()
    }

    pub fn eps(&self) -> f64 {
        self.sites.eps
    }

    /// Exact membership test. Ambiguous points within the tolerance band
    /// resolve to members.
    pub fn contains(&self, q: Point) -> bool {
        let eps = self.sites.eps;
        let Some(centers) = &self.centers else {
            return self.sites.hull.contains(q, eps);
        };
        let r = self.radius;
        let d0 = self.sites.tree.nearest_distance(q);
        if d0 <= eps {
            return true;
        }
        if d0 >= r - eps {
            return false;
        }
        if !self.sites.hull.contains(q, eps) {
            return false;
        }
        let reach = r - eps;
        if let Some(tree) = &centers.vertex_index {
            if tree.nearest_distance(q) <= reach {
                return false;
            }
        }
        if let Some(tree) = &centers.arc_index {
            let sites = &self.sites.sites;
            for k in tree.within(q, 2.0 * r - eps) {
                let site_idx = centers.arc_sites[k];
                let s = sites[site_idx];
                let d = s.dist(q);
                if d < eps {
                    continue;
                }
                let theta = (q.y - s.y).atan2(q.x - s.x);
                if centers.intervals[site_idx]
                    .iter()
                    .any(|iv| iv.contains(theta))
                {
                    return false;
                }
            }
        }
        true
    }

    /// True when both members and non-members occur on a `samples x samples`
    /// lattice over the disk of radius `dist` about `q`.
    pub fn near_boundary(&self, q: Point, dist: f64, samples: usize) -> bool {
        let inside = self.contains(q);
        let step = 2.0 * dist / (samples.max(2) - 1) as f64;
        for a in 0..samples {
            for b in 0..samples {
                let p = Point::new(q.x - dist + a as f64 * step, q.y - dist + b as f64 * step);
                if p.dist2(q) <= dist * dist && self.contains(p) != inside {
                    return true;
                }
            }
        }
        false
    }

    /// Membership for many queries.
    pub fn contains_many(&self, queries: &[Point]) -> Vec<bool> {
        queries.par_iter().map(|&q| self.contains(q)).collect()
    }

    /// Boundary as closed arc-polygon rings (outer rings counterclockwise,
    /// holes clockwise, isolated generators as single-point rings).
    pub fn boundary(&self) -> Result<ArcPolygonBoundary> {
        let Some(centers) = &self.centers else {
            return Err(Error::Degenerate(
                "infinite radius: use convex_hull for the boundary".into(),
            ));
        };
        if self.is_degenerate() {
            return Err(Error::Degenerate(
                "collinear generators: extract the boundary from a raster \
                 (RasterMask::boundary) instead"
                    .into(),
            ));
        }
        let sites = &self.sites.sites;
        let r = self.radius;
        let n = sites.len();
        let angle_tol = 1e3 * self.sites.eps / r;
        let mut crossings: HashMap<(usize, usize, bool), usize> = HashMap::new();
        let mut crossing_points: Vec<Point> = Vec::new();
        let mut arcs = Vec::new();
        for (k, v) in centers.vertices.iter().enumerate() {
            let (a, b) = (sites[v.i], sites[v.j]);
            // the empty ball sits to the right of the traversal
            let (from, to) = if (b - a).cross(v.center - a) < 0.0 {
                (v.i, v.j)
            } else {
                (v.j, v.i)
            };
            let whole = Element::minor_arc(v.center, r, sites[from], sites[to]);
            let Element::Arc { start_angle, ccw, .. } = whole else {
                unreachable!()
            };
            let sweep = whole.sweep().abs();
            let param = |p: Point| {
                let phi = (p.y - v.center.y).atan2(p.x - v.center.x);
                if ccw {
                    (phi - start_angle).rem_euclid(TAU)
                } else {
                    (start_angle - phi).rem_euclid(TAU)
                }
            };
            // the outline turns where another empty ball's circle crosses this arc
            let mut cuts: Vec<(f64, usize)> = Vec::new();
            if let Some(index) = &centers.vertex_index {
                for m in index.within(v.center, 2.0 * r) {
                    let w = centers.vertices[m].center;
                    if m == k || w.dist(v.center) <= self.sites.eps {
                        continue;
                    }
                    let (lo, hi) = (k.min(m), k.max(m));
                    let (c_lo, c_hi) = (centers.vertices[lo].center, centers.vertices[hi].center);
                    let d = c_lo.dist(c_hi);
                    let h = (r * r - 0.25 * d * d).max(0.0).sqrt();
                    let normal = (c_hi - c_lo).perp() * (1.0 / d);
                    for side in [true, false] {
                        let x = (c_lo + c_hi) * 0.5 + normal * if side { h } else { -h };
                        let t = param(x);
                        if t > angle_tol && t < sweep - angle_tol {
                            let id = *crossings.entry((lo, hi, side)).or_insert_with(|| {
                                crossing_points.push(x);
                                n + crossing_points.len() - 1
                            });
                            cuts.push((t, id));
                        }
                    }
                }
            }
            cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
            let point_of = |id: usize| if id < n { sites[id] } else { crossing_points[id - n] };
            let mut prev = from;
            for next in cuts.iter().map(|c| c.1).chain(std::iter::once(to)) {
                let (p, q) = (point_of(prev), point_of(next));
                let element = Element::Arc {
                    center: v.center,
                    radius: r,
                    start_angle: (p.y - v.center.y).atan2(p.x - v.center.x),
                    end_angle: (q.y - v.center.y).atan2(q.x - v.center.x),
                    ccw,
                };
                // pieces swallowed by another empty ball are not on the boundary
                if self.contains(element.midpoint()) {
                    arcs.push(SiteArc {
                        from: prev,
                        to: next,
                        element,
                    });
                }
                prev = next;
            }
        }
        let mut on_ring = vec![false; n + crossing_points.len()];
        for arc in &arcs {
            on_ring[arc.from] = true;
            on_ring[arc.to] = true;
        }
        let mut rings = trace_rings(&arcs);
        for (i, ivs) in centers.intervals.iter().enumerate() {
            if !ivs.is_empty() && !on_ring[i] {
                rings.push(Ring {
                    elements: vec![Element::Segment {
                        from: sites[i],
                        to: sites[i],
                    }],
                });
            }
        }
        Ok(ArcPolygonBoundary {
            rings,
            radius: Some(self.radius),
        })
    }

    /// Default raster window: generators padded by `pad`.
    pub fn default_bbox(&self, pad: f64) -> BBox {
        self.sites.bbox.padded(pad)
    }

    /// Cells whose centers are members.
    pub fn rasterize(&self, bbox: BBox, resolution: usize) -> RasterMask {
        RasterMask::from_predicate(bbox, resolution, |p| self.contains(p))
    }
}

/// Brute-force membership oracle: scans `grid_density` horizontal and
/// `grid_density` vertical lines of ball centers across the disk of radius
/// `r` around `q`. On each line the centers at distance `>= r` from every
/// generator form the complement of one open interval per nearby generator,
/// so the scan is exact along the line and discrete only across lines. Every
/// crossing of two radius-`r` generator circles is also tried. `q` is a
/// member iff none of these centers lies inside the open disk.
pub fn brute_force_contains(region: &RConvexRegion, q: Point, grid_density: usize) -> Result<bool> {
    let r = region.radius();
    if !r.is_finite() {
        return Err(Error::InvalidParameter {
            name: "radius",
            reason: "brute-force oracle needs a finite radius".into(),
        });
    }
    if grid_density == 0 {
        return Err(Error::InvalidParameter {
            name: "grid_density",
            reason: "must be positive".into(),
        });
    }
    Ok(brute_force_member(region.generators(), r, q, grid_density))
}

pub(crate) fn brute_force_member(sites: &[Point], r: f64, q: Point, grid_density: usize) -> bool {
    // sites farther than 2r from q cannot reach any candidate center
    let local: Vec<Point> = sites
        .iter()
        .copied()
        .filter(|s| s.dist2(q) < 4.0 * r * r)
        .collect();
    let swapped: Vec<Point> = local.iter().map(|s| Point::new(s.y, s.x)).collect();
    !lines_find_center(&local, r, q, grid_density)
        && !lines_find_center(&swapped, r, Point::new(q.y, q.x), grid_density)
        && !pair_vertices_find_center(&local, r, q)
}

/// Feasible centers can form slivers thinner than any line spacing; those
/// always contain a crossing of two site circles, so every crossing is
/// tried as well.
fn pair_vertices_find_center(sites: &[Point], r: f64, q: Point) -> bool {
    let r2 = r * r;
    // crossings are computed with rounding; those on a circle through q
    // (q a generator) must not count as strictly inside
    let slack = 1e-12 * r2;
    let feasible = |c: Point| c.dist2(q) < r2 - slack && sites.iter().all(|s| s.dist2(c) >= r2 - slack);
    for (i, a) in sites.iter().enumerate() {
        for b in &sites[i + 1..] {
            let d2 = a.dist2(*b);
            if d2 == 0.0 || d2 >= 4.0 * r2 {
                continue;
            }
            let (mx, my) = ((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
            let h = (r2 / d2 - 0.25).sqrt();
            let (ox, oy) = (-(b.y - a.y) * h, (b.x - a.x) * h);
            if feasible(Point::new(mx + ox, my + oy)) || feasible(Point::new(mx - ox, my - oy)) {
                return true;
            }
        }
    }
    false
}

/// Whether some horizontal scan line holds a center within `r` of `q` and
/// at distance `>= r` from every site.
fn lines_find_center(sites: &[Point], r: f64, q: Point, lines: usize) -> bool {
    let r2 = r * r;
    let step = 2.0 * r / lines as f64;
    let mut blocked: Vec<(f64, f64)> = Vec::with_capacity(sites.len());
    for b in 0..lines {
        let cy = q.y - r + (b as f64 + 0.5) * step;
        let half = (r2 - (cy - q.y).powi(2)).sqrt();
        let (lo, hi) = (q.x - half, q.x + half);
        blocked.clear();
        for s in sites {
            let w2 = r2 - (cy - s.y).powi(2);
            if w2 > 0.0 {
                let w = w2.sqrt();
                if s.x + w > lo && s.x - w < hi {
                    blocked.push((s.x - w, s.x + w));
                }
            }
        }
        blocked.sort_by(|u, v| u.0.total_cmp(&v.0));
        let mut reach = lo;
        for &(start, end) in &blocked {
            if start > reach {
                return true;
            }
            reach = reach.max(end);
        }
        if reach < hi {
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy)]
struct CenterVertex {
    center: Point,
    i: usize,
    j: usize,
}

/// Angular interval `[start, start + len]` of a site circle lying in `F`.
#[derive(Debug, Clone, Copy)]
struct ArcInterval {
    start: f64,
    len: f64,
}

impl ArcInterval {
    fn contains(&self, theta: f64) -> bool {
        (theta - self.start).rem_euclid(TAU) <= self.len
    }
}

#[derive(Debug)]
struct FeasibleCenters {
    vertices: Vec<CenterVertex>,
    vertex_index: Option<PointIndex>,
    intervals: Vec<Vec<ArcInterval>>,
    arc_sites: Vec<usize>,
    arc_index: Option<PointIndex>,
}

impl FeasibleCenters {
    fn build(set: &SiteSet, r: f64) -> Self {
        let sites = &set.sites;
        let eps = set.eps;
        let empty = |c: Point| set.tree.nearest_distance(c) >= r - eps;

        let mut vertices = Vec::new();
        let mut angles: Vec<Vec<f64>> = vec![Vec::new(); sites.len()];
        for &(i, j) in set.triangulation.edges() {
            let (a, b) = (sites[i], sites[j]);
            let d2 = a.dist2(b);
            if d2 >= 4.0 * r * r {
                continue;
            }
            let mid = (a + b) * 0.5;
            let h = (r * r - 0.25 * d2).max(0.0).sqrt();
            let normal = (b - a).perp() * (1.0 / d2.sqrt());
            for sign in [1.0, -1.0] {
                let c = mid + normal * (sign * h);
                if empty(c) {
                    vertices.push(CenterVertex { center: c, i, j });
                    angles[i].push((c.y - a.y).atan2(c.x - a.x));
                    angles[j].push((c.y - b.y).atan2(c.x - b.x));
                }
            }
        }

        let mut intervals = vec![Vec::new(); sites.len()];
        let mut arc_sites = Vec::new();
        for (k, s) in sites.iter().enumerate() {
            let ang = &mut angles[k];
            ang.sort_by(f64::total_cmp);
            let ivs = &mut intervals[k];
            if ang.is_empty() {
                if empty(Point::new(s.x + r, s.y)) {
                    ivs.push(ArcInterval { start: 0.0, len: TAU });
                }
            } else {
                let m = ang.len();
                for t in 0..m {
                    let start = ang[t];
                    let len = if m == 1 {
                        TAU
                    } else {
                        (ang[(t + 1) % m] - start).rem_euclid(TAU)
                    };
                    let mid = start + 0.5 * len;
                    if len > 0.0 && empty(Point::new(s.x + r * mid.cos(), s.y + r * mid.sin())) {
                        ivs.push(ArcInterval { start, len });
                    }
                }
            }
            if !ivs.is_empty() {
                arc_sites.push(k);
            }
        }

        let centers: Vec<Point> = vertices.iter().map(|v| v.center).collect();
        let arc_points: Vec<Point> = arc_sites.iter().map(|&k| sites[k]).collect();
        Self {
            vertex_index: (!centers.is_empty()).then(|| PointIndex::new(&centers)),
            arc_index: (!arc_points.is_empty()).then(|| PointIndex::new(&arc_points)),
            vertices,
            intervals,
            arc_sites,
        }
    }
}

/// Static 2-d search tree over a point list.
pub(crate) struct PointIndex {
    tree: ImmutableKdTree<f64, 2>,
}

impl std::fmt::Debug for PointIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PointIndex").finish_non_exhaustive()
    }
}

impl PointIndex {
    pub(crate) fn new(points: &[Point]) -> Self {
        let coords: Vec<[f64; 2]> = points.iter().map(|p| p.as_array()).collect();
        Self {
            tree: ImmutableKdTree::new_from_slice(&coords),
        }
    }

    pub(crate) fn nearest_distance(&self, q: Point) -> f64 {
        self.tree
            .nearest_one::<SquaredEuclidean>(&q.as_array())
            .distance
            .sqrt()
    }

    /// Indices of points strictly within `radius` of `q`, in arbitrary order.
    pub(crate) fn within(&self, q: Point, radius: f64) -> impl Iterator<Item = usize> {
        let r2 = radius * radius;
        self.tree
            .within_unsorted::<SquaredEuclidean>(&q.as_array(), r2)
            .into_iter()
            .filter(move |n| n.distance < r2)
            .map(|n| n.item as usize)
    }
}

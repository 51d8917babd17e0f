//! Planar points and validated point clouds.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        self.dist2(other).sqrt()
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Counterclockwise quarter turn.
    #[inline]
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub(crate) fn as_array(self) -> [f64; 2] {
        [self.x, self.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    /// Smallest box containing every point. Panics on an empty slice.
    pub fn of_points(points: &[Point]) -> Self {
        assert!(!points.is_empty(), "bounding box of empty point set");
        let mut b = BBox::new(points[0].x, points[0].y, points[0].x, points[0].y);
        for p in &points[1..] {
            b.xmin = b.xmin.min(p.x);
            b.ymin = b.ymin.min(p.y);
            b.xmax = b.xmax.max(p.x);
            b.ymax = b.ymax.max(p.y);
        }
        b
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn padded(&self, pad: f64) -> Self {
        BBox::new(
            self.xmin - pad,
            self.ymin - pad,
            self.xmax + pad,
            self.ymax + pad,
        )
    }

    pub fn union(&self, other: &BBox) -> Self {
        BBox::new(
            self.xmin.min(other.xmin),
            self.ymin.min(other.ymin),
            self.xmax.max(other.xmax),
            self.ymax.max(other.ymax),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.xmax > self.xmin && self.ymax > self.ymin)
    }
}

/// An ordered, non-empty set of finite planar sample points.
///
/// Exact duplicates are kept (they carry sampling weight) but counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("point cloud has no points"));
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points })
    }

    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self> {
        Self::new(coords.iter().map(|&c| Point::from(c)).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bbox(&self) -> BBox {
        BBox::of_points(&self.points)
    }

    /// Number of points that exactly repeat an earlier point.
    pub fn duplicate_count(&self) -> usize {
        self.points.len() - dedup_points(&self.points).len()
    }

    /// Distinct points in first-occurrence order.
    pub fn distinct(&self) -> Vec<Point> {
        dedup_points(&self.points)
    }

    pub fn into_inner(self) -> Vec<Point> {
        self.points
    }
}

impl TryFrom<Vec<Point>> for PointCloud {
    type Error = Error;
    fn try_from(points: Vec<Point>) -> Result<Self> {
        PointCloud::new(points)
    }
}

impl From<PointCloud> for Vec<Point> {
    fn from(c: PointCloud) -> Self {
        c.points
    }
}

/// Distinct points (bitwise coordinate equality) in first-occurrence order.
pub fn dedup_points(points: &[Point]) -> Vec<Point> {
    let mut seen = std::collections::HashSet::with_capacity(points.len());
    points
        .iter()
        .copied()
        .filter(|p| seen.insert((canon(p.x), canon(p.y))))
        .collect()
}

// -0.0 and 0.0 compare equal and must hash equally.
fn canon(v: f64) -> u64 {
    if v == 0.0 { 0 } else { v.to_bits() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(PointCloud::new(vec![]), Err(Error::EmptyInput(_))));
        let err = PointCloud::from_xy(&[(0.0, 0.0), (f64::NAN, 1.0)]).unwrap_err();
        assert_eq!(err, Error::NonFinite { index: 1 });
    }

    #[test]
    fn counts_duplicates() {
        let c = PointCloud::from_xy(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (-0.0, 0.0)]).unwrap();
        assert_eq!(c.duplicate_count(), 2);
        assert_eq!(c.distinct().len(), 2);
    }
}

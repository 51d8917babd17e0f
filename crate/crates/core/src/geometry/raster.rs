//! Boolean raster masks on a regular grid and the set distances built on
//! them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::boundary::{ArcPolygonBoundary, Element, Ring, SiteArc, trace_rings};
use crate::point::{BBox, Point};

/// Row-major mask: cell `(ix, iy)` is stored at `iy * resolution + ix`,
/// with `iy = 0` the bottom row. Cells are judged at their centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMask {
    pub bbox: BBox,
    pub resolution: usize,
    pub bits: Vec<bool>,
}

impl RasterMask {
    pub fn empty(bbox: BBox, resolution: usize) -> Self {
        assert!(resolution > 0, "raster resolution must be positive");
        Self {
            bbox,
            resolution,
            bits: vec![false; resolution * resolution],
        }
    }

    pub fn from_predicate<F>(bbox: BBox, resolution: usize, pred: F) -> Self
    where
        F: Fn(Point) -> bool + Sync,
    {
        let mut mask = Self::empty(bbox, resolution);
        let grid = mask.clone();
        mask.bits
            .par_chunks_mut(resolution)
            .enumerate()
            .for_each(|(iy, row)| {
                for (ix, bit) in row.iter_mut().enumerate() {
                    *bit = pred(grid.cell_center(ix, iy));
                }
            });
        mask
    }

    pub fn cell_width(&self) -> f64 {
        self.bbox.width() / self.resolution as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.bbox.height() / self.resolution as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_width() * self.cell_height()
    }

    /// Larger of the two cell side lengths.
    pub fn cell_size(&self) -> f64 {
        self.cell_width().max(self.cell_height())
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            self.bbox.xmin + (ix as f64 + 0.5) * self.cell_width(),
            self.bbox.ymin + (iy as f64 + 0.5) * self.cell_height(),
        )
    }

    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.bits[iy * self.resolution + ix]
    }

    pub fn set(&mut self, ix: usize, iy: usize, value: bool) {
        self.bits[iy * self.resolution + ix] = value;
    }

    /// Cell containing `p`, if any.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.bbox.xmin) / self.cell_width();
        let fy = (p.y - self.bbox.ymin) / self.cell_height();
        let n = self.resolution as f64;
        ((0.0..n).contains(&fx) && (0.0..n).contains(&fy)).then(|| (fx as usize, fy as usize))
    }

    /// Membership of the cell containing `p`; false outside the grid.
    pub fn contains(&self, p: Point) -> bool {
        self.cell_of(p).is_some_and(|(ix, iy)| self.get(ix, iy))
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn area(&self) -> f64 {
        self.count() as f64 * self.cell_area()
    }

    pub fn same_grid(&self, other: &RasterMask) -> bool {
        self.resolution == other.resolution && self.bbox == other.bbox
    }

    fn check_grid(&self, other: &RasterMask) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Lebesgue measure of the symmetric difference.
    pub fn measure_distance(&self, other: &RasterMask) -> Result<f64> {
        self.check_grid(other)?;
        let xor = self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count();
        Ok(xor as f64 * self.cell_area())
    }

    /// Symmetric-difference mass under per-cell weights (e.g. cell
    /// probabilities).
    pub fn weighted_distance(&self, other: &RasterMask, weights: &[f64]) -> Result<f64> {
        self.check_grid(other)?;
        if weights.len() != self.bits.len() {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .zip(weights)
            .filter(|((a, b), _)| a != b)
            .map(|(_, w)| w)
            .sum())
    }

    pub fn union(&self, other: &RasterMask) -> Result<RasterMask> {
        self.check_grid(other)?;
        let mut out = self.clone();
        for (a, &b) in out.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(out)
    }

    pub fn complement(&self) -> RasterMask {
        let mut out = self.clone();
        for b in &mut out.bits {
            *b = !*b;
        }
        out
    }

    /// True when every set cell of `self` is set in `other`.
    pub fn is_subset_of(&self, other: &RasterMask) -> Result<bool> {
        self.check_grid(other)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b))
    }

    /// Euclidean distance from each cell center to the nearest set cell
    /// center (`INFINITY` everywhere when the mask is empty).
    pub fn distance_transform(&self) -> Vec<f64> {
        let n = self.resolution;
        let (dx, dy) = (self.cell_width(), self.cell_height());
        let mut sq: Vec<f64> = self
            .bits
            .iter()
            .map(|&b| if b { 0.0 } else { f64::INFINITY })
            .collect();
        sq.par_chunks_mut(n).for_each(|row| {
            let out = edt_1d(row, dx);
            row.copy_from_slice(&out);
        });
        let mut transposed = transpose(&sq, n);
        transposed.par_chunks_mut(n).for_each(|col| {
            let out = edt_1d(col, dy);
            col.copy_from_slice(&out);
        });
        transpose(&transposed, n).into_iter().map(f64::sqrt).collect()
    }

    /// Hausdorff distance between the cell-center sets of two masks.
    pub fn hausdorff(&self, other: &RasterMask) -> Result<f64> {
        self.check_grid(other)?;
        if self.is_empty() || other.is_empty() {
            return Err(Error::EmptyInput("Hausdorff distance needs two non-empty masks"));
        }
        let directed = |a: &RasterMask, dt_b: &[f64]| {
            a.bits
                .iter()
                .zip(dt_b)
                .filter(|(bit, _)| **bit)
                .map(|(_, &d)| d)
                .fold(0.0f64, f64::max)
        };
        let ab = directed(self, &other.distance_transform());
        let ba = directed(other, &self.distance_transform());
        Ok(ab.max(ba))
    }

    /// Cells within `radius` of a set cell.
    pub fn dilate(&self, radius: f64) -> RasterMask {
        let tol = 1e-9 * self.cell_size();
        let dt = self.distance_transform();
        RasterMask {
            bbox: self.bbox,
            resolution: self.resolution,
            bits: dt.iter().map(|&d| d <= radius + tol).collect(),
        }
    }

    /// Cells farther than `radius` from every unset cell of the grid.
    pub fn erode(&self, radius: f64) -> RasterMask {
        let tol = 1e-9 * self.cell_size();
        let dt = self.complement().distance_transform();
        RasterMask {
            bbox: self.bbox,
            resolution: self.resolution,
            bits: dt.iter().map(|&d| d > radius + tol).collect(),
        }
    }

    /// Morphological closing by a disk. The grid is padded internally so
    /// that dilation is not clipped at the window edge.
    pub fn closing(&self, radius: f64) -> RasterMask {
        let pad = (radius / self.cell_size().max(f64::MIN_POSITIVE)).ceil() as usize + 2;
        let padded = self.pad(pad);
        let closed = padded.dilate(radius).erode(radius);
        let mut out = closed.crop(pad, self.resolution);
        out.bbox = self.bbox;
        out
    }

    /// Square grid with `pad` extra cells on each side. Requires square
    /// cells in the sense that both axes gain the same number of cells.
    fn pad(&self, pad: usize) -> RasterMask {
        let n = self.resolution + 2 * pad;
        let (dx, dy) = (self.cell_width(), self.cell_height());
        let bbox = BBox::new(
            self.bbox.xmin - pad as f64 * dx,
            self.bbox.ymin - pad as f64 * dy,
            self.bbox.xmax + pad as f64 * dx,
            self.bbox.ymax + pad as f64 * dy,
        );
        let mut out = RasterMask::empty(bbox, n);
        for iy in 0..self.resolution {
            for ix in 0..self.resolution {
                if self.get(ix, iy) {
                    out.set(ix + pad, iy + pad, true);
                }
            }
        }
        out
    }

    fn crop(&self, offset: usize, n: usize) -> RasterMask {
        let (dx, dy) = (self.cell_width(), self.cell_height());
        let bbox = BBox::new(
            self.bbox.xmin + offset as f64 * dx,
            self.bbox.ymin + offset as f64 * dy,
            self.bbox.xmin + (offset + n) as f64 * dx,
            self.bbox.ymin + (offset + n) as f64 * dy,
        );
        let mut out = RasterMask::empty(bbox, n);
        for iy in 0..n {
            for ix in 0..n {
                out.set(ix, iy, self.get(ix + offset, iy + offset));
            }
        }
        out
    }

    /// Number of 8-connected components of set cells.
    pub fn connected_components(&self) -> usize {
        let n = self.resolution;
        let mut seen = vec![false; self.bits.len()];
        let mut stack = Vec::new();
        let mut components = 0;
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (ix, iy) = ((k % n) as isize, (k / n) as isize);
                for ny in iy - 1..=iy + 1 {
                    for nx in ix - 1..=ix + 1 {
                        if nx < 0 || ny < 0 || nx >= n as isize || ny >= n as isize {
                            continue;
                        }
                        let m = ny as usize * n + nx as usize;
                        if self.bits[m] && !seen[m] {
                            seen[m] = true;
                            stack.push(m);
                        }
                    }
                }
            }
        }
        components
    }

    /// Outline of the set cells as straight-edged rings along cell edges
    /// (outer rings counterclockwise, holes clockwise).
    pub fn boundary(&self) -> ArcPolygonBoundary {
        let n = self.resolution;
        let (dx, dy) = (self.cell_width(), self.cell_height());
        let corner = |ix: usize, iy: usize| {
            Point::new(
                self.bbox.xmin + ix as f64 * dx,
                self.bbox.ymin + iy as f64 * dy,
            )
        };
        let id = |ix: usize, iy: usize| iy * (n + 1) + ix;
        let filled = |ix: isize, iy: isize| {
            ix >= 0 && iy >= 0 && (ix as usize) < n && (iy as usize) < n && self.get(ix as usize, iy as usize)
        };
        let mut edges = Vec::new();
        let mut push = |a: (usize, usize), b: (usize, usize)| {
            edges.push(SiteArc {
                from: id(a.0, a.1),
                to: id(b.0, b.1),
                element: Element::Segment {
                    from: corner(a.0, a.1),
                    to: corner(b.0, b.1),
                },
            });
        };
        for iy in 0..n {
            for ix in 0..n {
                if !self.get(ix, iy) {
                    continue;
                }
                let (x, y) = (ix as isize, iy as isize);
                if !filled(x, y - 1) {
                    push((ix, iy), (ix + 1, iy));
                }
                if !filled(x + 1, y) {
                    push((ix + 1, iy), (ix + 1, iy + 1));
                }
                if !filled(x, y + 1) {
                    push((ix + 1, iy + 1), (ix, iy + 1));
                }
                if !filled(x - 1, y) {
                    push((ix, iy + 1), (ix, iy));
                }
            }
        }
        let rings = trace_rings(&edges)
            .into_iter()
            .map(merge_collinear)
            .collect();
        ArcPolygonBoundary {
            rings,
            radius: None,
        }
    }

    /// Plain (`P1`) or raw (`P4`) portable bitmap; black pixels are set
    /// cells and the first row is the top of `bbox`.
    pub fn from_pbm(bytes: &[u8], bbox: BBox) -> Result<RasterMask> {
        let bad = |reason: &str| Error::InvalidParameter {
            name: "pbm",
            reason: reason.to_string(),
        };
        let mut pos = 0usize;
        let mut token = |bytes: &[u8]| -> Option<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token(bytes).ok_or_else(|| bad("missing magic number"))?;
        let w: usize = token(bytes)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("missing width"))?;
        let h: usize = token(bytes)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("missing height"))?;
        if w != h || w == 0 {
            return Err(bad("bitmap must be square and non-empty"));
        }
        let mut rows = vec![false; w * h];
        match magic.as_str() {
            "P1" => {
                let mut k = 0;
                while k < w * h {
                    while pos < bytes.len() && (bytes[pos].is_ascii_whitespace()) {
                        pos += 1;
                    }
                    match bytes.get(pos) {
                        Some(b'0') => rows[k] = false,
                        Some(b'1') => rows[k] = true,
                        _ => return Err(bad("truncated P1 pixel data")),
                    }
                    pos += 1;
                    k += 1;
                }
            }
            "P4" => {
                pos += 1;
                let stride = w.div_ceil(8);
                if bytes.len() < pos + stride * h {
                    return Err(bad("truncated P4 pixel data"));
                }
                for r in 0..h {
                    for c in 0..w {
                        let byte = bytes[pos + r * stride + c / 8];
                        rows[r * w + c] = byte & (0x80 >> (c % 8)) != 0;
                    }
                }
            }
            _ => return Err(bad("expected P1 or P4")),
        }
        let mut mask = RasterMask::empty(bbox, w);
        for r in 0..h {
            for c in 0..w {
                mask.set(c, h - 1 - r, rows[r * w + c]);
            }
        }
        Ok(mask)
    }

    /// Plain `P1` encoding, top row first.
    pub fn to_pbm(&self) -> String {
        let n = self.resolution;
        let mut out = format!("P1\n{n} {n}\n");
        for iy in (0..n).rev() {
            let row: Vec<&str> = (0..n)
                .map(|ix| if self.get(ix, iy) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn merge_collinear(ring: Ring) -> Ring {
    let mut out: Vec<Element> = Vec::with_capacity(ring.elements.len());
    for e in ring.elements {
        if let (Some(Element::Segment { from, to }), Element::Segment { to: next, .. }) =
            (out.last_mut(), &e)
        {
            if (*to - *from).cross(*next - *to).abs() < 1e-12 * from.dist2(*next).max(1e-300)
                && (*to - *from).dot(*next - *to) > 0.0
            {
                *to = *next;
                continue;
            }
        }
        out.push(e);
    }
    // the first and last segments may also be collinear
    if out.len() > 2 {
        if let (Element::Segment { from: a, to: b }, Element::Segment { from: c, to: d }) =
            (out[out.len() - 1], out[0])
        {
            if b == c && (b - a).cross(d - c).abs() < 1e-12 * a.dist2(d) && (b - a).dot(d - c) > 0.0 {
                out[0] = Element::Segment { from: a, to: d };
                out.pop();
            }
        }
    }
    Ring { elements: out }
}

fn transpose(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = v[i * n + j];
        }
    }
    out
}

/// Lower envelope of parabolas: `out[p] = min_q ((p - q) * spacing)^2 + f[q]`.
fn edt_1d(f: &[f64], spacing: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![f64::INFINITY; n];
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    let pos = |q: usize| q as f64 * spacing;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        loop {
            let Some(&last) = v.last() else {
                v.push(q);
                z.clear();
                z.push(f64::NEG_INFINITY);
                break;
            };
            let s = ((f[q] + pos(q).powi(2)) - (f[last] + pos(last).powi(2)))
                / (2.0 * (pos(q) - pos(last)));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
                if v.is_empty() {
                    continue;
                }
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        return out;
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while z[k + 1] < pos(p) {
            k += 1;
        }
        let d = pos(p) - pos(v[k]);
        *o = d * d + f[v[k]];
    }
    out
}

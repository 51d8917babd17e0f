//! Synthetic reference densities with exact samplers and level sets, a
//! raster oracle for the r-convexity radius of a level set, and the
//! convergence experiment harness.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::KdeModel;
use crate::error::{Error, Result, invalid};
use crate::estimator::estimate_level_set;
use crate::geometry::RasterMask;
use crate::point::{BBox, Point, PointCloud};
use crate::splitter::{auto_margin, dn, split_margin};

/// Names accepted by [`SyntheticDensity::preset`].
pub const PRESETS: [&str; 3] = ["two-discs", "annulus", "bimodal"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Point,
    /// Standard deviations along x and y (diagonal covariance).
    pub sd: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Point,
    pub radius: f64,
}

/// A planar density with closed-form values and an exact sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticDensity {
    GaussianMixture { components: Vec<GaussianComponent> },
    /// Uniform on a union of pairwise disjoint discs.
    UniformDiscs { discs: Vec<Disc> },
    UniformAnnulus { center: Point, inner: f64, outer: f64 },
}

impl SyntheticDensity {
    /// Validated density; mixture weights are normalized to sum to one.
    pub fn new(spec: SyntheticDensity) -> Result<Self> {
        match spec {
            SyntheticDensity::GaussianMixture { mut components } => {
                if components.is_empty() {
                    return Err(Error::EmptyInput("mixture has no components"));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                for c in &components {
                    if !(c.weight > 0.0 && c.sd.0 > 0.0 && c.sd.1 > 0.0 && c.mean.is_finite()) {
                        return Err(invalid("components", "need positive weights and deviations"));
                    }
                }
                for c in &mut components {
                    c.weight /= total;
                }
                Ok(SyntheticDensity::GaussianMixture { components })
            }
            SyntheticDensity::UniformDiscs { discs } => {
                if discs.is_empty() {
                    return Err(Error::EmptyInput("no discs"));
                }
                if discs.iter().any(|d| !(d.radius > 0.0 && d.center.is_finite())) {
                    return Err(invalid("discs", "radii must be positive"));
                }
                for (i, a) in discs.iter().enumerate() {
                    for b in &discs[i + 1..] {
                        if a.center.dist(b.center) < a.radius + b.radius {
                            return Err(invalid("discs", "discs must be pairwise disjoint"));
                        }
                    }
                }
                Ok(SyntheticDensity::UniformDiscs { discs })
            }
            SyntheticDensity::UniformAnnulus { center, inner, outer } => {
                if !(inner >= 0.0 && outer > inner && center.is_finite()) {
                    return Err(invalid("annulus", "need 0 <= inner < outer"));
                }
                Ok(SyntheticDensity::UniformAnnulus { center, inner, outer })
            }
        }
    }

    /// Shipped shapes: `two-discs` (radius 0.5, centers (+-1, 0)),
    /// `annulus` (radii 0.5 and 1 about the origin) and `bimodal` (equal
    /// standard normals at (+-1.5, 0)).
    pub fn preset(name: &str) -> Result<Self> {
        let spec = match name {
            "two-discs" => SyntheticDensity::UniformDiscs {
                discs: vec![
                    Disc { center: Point::new(-1.0, 0.0), radius: 0.5 },
                    Disc { center: Point::new(1.0, 0.0), radius: 0.5 },
                ],
            },
            "annulus" => SyntheticDensity::UniformAnnulus {
                center: Point::new(0.0, 0.0),
                inner: 0.5,
                outer: 1.0,
            },
            "bimodal" => SyntheticDensity::GaussianMixture {
                components: [-1.5, 1.5]
                    .iter()
                    .map(|&x| GaussianComponent {
                        weight: 0.5,
                        mean: Point::new(x, 0.0),
                        sd: (1.0, 1.0),
                    })
                    .collect(),
            },
            other => {
                return Err(invalid(
                    "density",
                    format!("unknown shape `{other}`; available: {}", PRESETS.join(", ")),
                ));
            }
        };
        Self::new(spec)
    }

    pub fn density(&self, p: Point) -> f64 {
        match self {
            SyntheticDensity::GaussianMixture { components } => components
                .iter()
                .map(|c| {
                    let u = (p.x - c.mean.x) / c.sd.0;
                    let v = (p.y - c.mean.y) / c.sd.1;
                    c.weight * (-0.5 * (u * u + v * v)).exp() / (2.0 * PI * c.sd.0 * c.sd.1)
                })
                .sum(),
            SyntheticDensity::UniformDiscs { discs } => {
                if discs.iter().any(|d| p.dist2(d.center) <= d.radius * d.radius) {
                    1.0 / self.support_area()
                } else {
                    0.0
                }
            }
            SyntheticDensity::UniformAnnulus { center, inner, outer } => {
                let r2 = p.dist2(*center);
                if r2 >= inner * inner && r2 <= outer * outer {
                    1.0 / self.support_area()
                } else {
                    0.0
                }
            }
        }
    }

    fn support_area(&self) -> f64 {
        match self {
            SyntheticDensity::GaussianMixture { .. } => f64::INFINITY,
            SyntheticDensity::UniformDiscs { discs } => {
                discs.iter().map(|d| PI * d.radius * d.radius).sum()
            }
            SyntheticDensity::UniformAnnulus { inner, outer, .. } => PI * (outer * outer - inner * inner),
        }
    }

    /// Largest density value. For mixtures this is the largest value at a
    /// component mean; overlapping components can peak slightly off a mean.
    pub fn peak_density(&self) -> f64 {
        match self {
            SyntheticDensity::GaussianMixture { components } => components
                .iter()
                .map(|c| self.density(c.mean))
                .fold(0.0, f64::max),
            _ => 1.0 / self.support_area(),
        }
    }

    /// Box holding the support (mixtures: means +- 4 standard deviations).
    pub fn support_bbox(&self) -> BBox {
        match self {
            SyntheticDensity::GaussianMixture { components } => components
                .iter()
                .map(|c| {
                    BBox::new(
                        c.mean.x - 4.0 * c.sd.0,
                        c.mean.y - 4.0 * c.sd.1,
                        c.mean.x + 4.0 * c.sd.0,
                        c.mean.y + 4.0 * c.sd.1,
                    )
                })
                .reduce(|a, b| a.union(&b))
                .expect("validated non-empty"),
            SyntheticDensity::UniformDiscs { discs } => discs
                .iter()
                .map(|d| d.center)
                .zip(discs.iter().map(|d| d.radius))
                .map(|(c, r)| BBox::new(c.x - r, c.y - r, c.x + r, c.y + r))
                .reduce(|a, b| a.union(&b))
                .expect("validated non-empty"),
            SyntheticDensity::UniformAnnulus { center, outer, .. } => BBox::new(
                center.x - outer,
                center.y - outer,
                center.x + outer,
                center.y + outer,
            ),
        }
    }

    /// Square window around the support, padded by 10% of its longer side,
    /// so that raster cells are square.
    pub fn truth_bbox(&self) -> BBox {
        let b = self.support_bbox();
        let side = b.width().max(b.height()) * 1.2;
        let (cx, cy) = (0.5 * (b.xmin + b.xmax), 0.5 * (b.ymin + b.ymax));
        BBox::new(cx - side / 2.0, cy - side / 2.0, cx + side / 2.0, cy + side / 2.0)
    }

    /// Half the shorter side of the support box; scales the oracle radius
    /// grid.
    pub fn characteristic_length(&self) -> f64 {
        let b = self.support_bbox();
        0.5 * b.width().min(b.height())
    }

    pub fn sample(&self, n: usize, seed: u64) -> PointCloud {
        self.sample_with(&mut ChaCha8Rng::seed_from_u64(seed), n)
    }

    /// `n` i.i.d. draws; `n` must be positive.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> PointCloud {
        assert!(n > 0, "sample size must be positive");
        let pts = (0..n).map(|_| self.draw_one(rng)).collect();
        PointCloud::new(pts).expect("draws are finite")
    }

    fn draw_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            SyntheticDensity::GaussianMixture { components } => {
                let c = pick(rng, components.iter().map(|c| c.weight), components.len());
                let c = &components[c];
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                Point::new(c.mean.x + c.sd.0 * z1, c.mean.y + c.sd.1 * z2)
            }
            SyntheticDensity::UniformDiscs { discs } => {
                let d = pick(rng, discs.iter().map(|d| d.radius * d.radius), discs.len());
                let d = discs[d];
                loop {
                    let u = rng.random_range(-1.0..1.0);
                    let v = rng.random_range(-1.0..1.0);
                    if u * u + v * v <= 1.0 {
                        return Point::new(d.center.x + d.radius * u, d.center.y + d.radius * v);
                    }
                }
            }
            SyntheticDensity::UniformAnnulus { center, inner, outer } => loop {
                let u = rng.random_range(-1.0..1.0);
                let v = rng.random_range(-1.0..1.0);
                let r2 = u * u + v * v;
                let rho = inner / outer;
                if r2 <= 1.0 && r2 >= rho * rho {
                    return Point::new(center.x + outer * u, center.y + outer * v);
                }
            },
        }
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>, len: usize) -> usize {
    let w: Vec<f64> = weights.collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    len - 1
}

/// Level given as a raw density threshold or as a probability content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    /// `{f >= t}`.
    Threshold(f64),
    /// `{f >= f_tau}` holding probability `1 - tau`.
    Content(f64),
}

/// Rasterized true level set with the density threshold that defines it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMask {
    pub mask: RasterMask,
    pub threshold: f64,
}

/// Cells whose center density clears the level. In content mode the
/// threshold is the largest cell value `y` whose superlevel cells hold at
/// least `1 - tau` of the raster mass.
pub fn true_level_mask(density: &SyntheticDensity, level: Level, bbox: BBox, resolution: usize) -> Result<TruthMask> {
    let grid = RasterMask::empty(bbox, resolution);
    let values: Vec<f64> = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| density.density(grid.cell_center(k % resolution, k / resolution)))
        .collect();
    let threshold = match level {
        Level::Threshold(t) => {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("t", format!("must be positive, got {t}")));
            }
            t
        }
        Level::Content(tau) => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(invalid("tau", format!("must lie in (0, 1), got {tau}")));
            }
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let total: f64 = sorted.iter().sum();
            let target = (1.0 - tau) * total;
            let mut acc = 0.0;
            let mut t = sorted[0];
            for &v in &sorted {
                // the whole tie class at v enters together
                if acc >= target && v < t {
                    break;
                }
                acc += v;
                t = v;
            }
            t
        }
    };
    let mut mask = grid;
    for (bit, v) in mask.bits.iter_mut().zip(&values) {
        *bit = *v >= threshold;
    }
    Ok(TruthMask { mask, threshold })
}

/// 60 radii log-spaced over `[0.01, 2] * length`.
pub fn gamma_grid(length: f64) -> Vec<f64> {
    let (lo, hi) = (0.01 * length, 2.0 * length);
    (0..60)
        .map(|i| lo * (hi / lo).powf(i as f64 / 59.0))
        .collect()
}

/// Cells the oracle tolerates outside the truth: a band this many cells
/// wide around it.
pub const ORACLE_BAND_CELLS: f64 = 3.0;

/// Largest radius on the ascending grid up to which the raster closing of
/// `truth` stays equal to `truth`, where equal means the closing adds no
/// cell farther than three cells from the truth. Returns 0 when even the
/// smallest radius fails.
pub fn r0_grid_oracle(truth: &RasterMask, gamma_grid: &[f64]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyInput("oracle needs a non-empty truth mask"));
    }
    if gamma_grid.is_empty() || gamma_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("gamma_grid", "need a non-empty ascending grid"));
    }
    let band = truth.dilate(ORACLE_BAND_CELLS * truth.cell_size());
    let mut best = 0.0;
    for &g in gamma_grid {
        if !truth.closing(g).is_subset_of(&band)? {
            break;
        }
        best = g;
    }
    Ok(best)
}

/// Settings of [`run_convergence`]. Splits use the margin rule at the true
/// threshold with the automatic margin constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub density: SyntheticDensity,
    pub level: Level,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub nu: f64,
    pub seed: u64,
    pub resolution: usize,
    pub j: usize,
    /// Reference radius for relative errors (typically the grid oracle).
    pub r0_reference: Option<f64>,
}

/// One replicate of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub n: usize,
    pub replicate: usize,
    #[serde(with = "crate::serde_inf")]
    pub r_hat: f64,
    pub convex_fallback: bool,
    pub rel_error: Option<f64>,
    pub d_mu: f64,
    pub d_h: Option<f64>,
    pub plugin_d_mu: f64,
    pub contained: bool,
    pub components: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    pub dn: f64,
    pub failure: Option<String>,
}

/// Medians and tallies for one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub median_rel_error: Option<f64>,
    pub median_d_mu: f64,
    pub median_d_h: Option<f64>,
    pub median_plugin_d_mu: f64,
    pub containment_rate: f64,
    pub two_component_rate: f64,
    pub convex_fallbacks: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: ConvergenceConfig,
    pub truth_threshold: f64,
    pub truth_area: f64,
    pub rows: Vec<ReplicateRow>,
    pub summaries: Vec<SizeSummary>,
    /// Least-squares slope of log median `d_mu` against log `n`.
    pub d_mu_slope: Option<f64>,
    pub plugin_d_mu_slope: Option<f64>,
}

/// For each `n` and replicate: sample, fit the LSCV model, split by the
/// margin rule, estimate `C_{nu r0_hat}(X+)` and compare its raster with the
/// truth raster. Replicate `i` at grid position `a` draws from ChaCha8
/// stream `(a << 32) | i` of `seed`.
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    if cfg.n_grid.is_empty() || cfg.replicates == 0 {
        return Err(invalid("n_grid", "need at least one size and one replicate"));
    }
    if let Some(&n) = cfg.n_grid.iter().find(|&&n| n < 30) {
        return Err(invalid("n_grid", format!("sample sizes must be at least 30, got {n}")));
    }
    let bbox = cfg.density.truth_bbox();
    let truth = true_level_mask(&cfg.density, cfg.level, bbox, cfg.resolution)?;
    if truth.mask.is_empty() {
        return Err(Error::EmptyLevelSet);
    }
    let tolerance_band = truth.mask.dilate(2.0 * truth.mask.cell_size());
    let jobs: Vec<(usize, usize, usize)> = cfg
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(a, &n)| (0..cfg.replicates).map(move |i| (a, n, i)))
        .collect();
    let rows: Vec<ReplicateRow> = jobs
        .par_iter()
        .map(|&(a, n, i)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((a as u64) << 32) | i as u64);
            replicate(cfg, &truth, &tolerance_band, n, i, &mut rng)
        })
        .collect::<Result<_>>()?;
    let summaries: Vec<SizeSummary> = cfg
        .n_grid
        .iter()
        .map(|&n| summarize(n, rows.iter().filter(|r| r.n == n)))
        .collect();
    let slope = |f: fn(&SizeSummary) -> f64| {
        let pts: Vec<(f64, f64)> = summaries
            .iter()
            .map(|s| ((s.n as f64).ln(), f(s).ln()))
            .collect();
        loglog_slope(&pts)
    };
    Ok(ConvergenceReport {
        config: cfg.clone(),
        truth_threshold: truth.threshold,
        truth_area: truth.mask.area(),
        d_mu_slope: slope(|s| s.median_d_mu),
        plugin_d_mu_slope: slope(|s| s.median_plugin_d_mu),
        rows,
        summaries,
    })
}

fn replicate(
    cfg: &ConvergenceConfig,
    truth: &TruthMask,
    band: &RasterMask,
    n: usize,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ReplicateRow> {
    let sample = cfg.density.sample_with(rng, n);
    let margin_seed: u64 = rng.random();
    let model = KdeModel::fit(sample.clone())?;
    let grid = &truth.mask;
    let plugin = RasterMask::from_predicate(grid.bbox, grid.resolution, |p| model.exceeds(p, truth.threshold));
    let plugin_d_mu = plugin.measure_distance(grid)?;
    let sched = auto_margin(&model, 2, margin_seed)?;
    let margin = dn(&sched, n)?;
    let split = split_margin(&model, &sample, truth.threshold, margin)?;
    let mut row = ReplicateRow {
        n,
        replicate: index,
        r_hat: f64::NAN,
        convex_fallback: false,
        rel_error: cfg.r0_reference.map(|_| f64::INFINITY),
        d_mu: grid.area(),
        d_h: None,
        plugin_d_mu,
        contained: false,
        components: 0,
        n_plus: split.plus().len(),
        n_minus: split.minus().len(),
        dn: margin,
        failure: None,
    };
    let est = match estimate_level_set(&split, cfg.nu, cfg.j, None) {
        Ok(est) => est,
        Err(e) => {
            row.failure = Some(e.to_string());
            return Ok(row);
        }
    };
    let r_hat = est.radius_estimate.r_hat;
    let mask = est.region.rasterize(grid.bbox, grid.resolution);
    row.r_hat = r_hat;
    row.convex_fallback = est.radius_estimate.convex_fallback;
    row.rel_error = cfg.r0_reference.map(|r0| (r_hat - r0).abs() / r0);
    row.d_mu = mask.measure_distance(grid)?;
    row.d_h = if mask.is_empty() {
        None
    } else {
        Some(mask.hausdorff(grid)?)
    };
    row.contained = mask.is_subset_of(band)?;
    row.components = mask.connected_components();
    Ok(row)
}

fn summarize<'a>(n: usize, rows: impl Iterator<Item = &'a ReplicateRow>) -> SizeSummary {
    let rows: Vec<&ReplicateRow> = rows.collect();
    let count = rows.len() as f64;
    let rel: Option<Vec<f64>> = rows.iter().map(|r| r.rel_error).collect();
    let d_h: Vec<f64> = rows.iter().filter_map(|r| r.d_h).collect();
    SizeSummary {
        n,
        median_rel_error: rel.map(|v| median(&v)),
        median_d_mu: median(&rows.iter().map(|r| r.d_mu).collect::<Vec<_>>()),
        median_d_h: (d_h.len() == rows.len()).then(|| median(&d_h)),
        median_plugin_d_mu: median(&rows.iter().map(|r| r.plugin_d_mu).collect::<Vec<_>>()),
        containment_rate: rows.iter().filter(|r| r.contained).count() as f64 / count,
        two_component_rate: rows.iter().filter(|r| r.components == 2).count() as f64 / count,
        convex_fallbacks: rows.iter().filter(|r| r.convex_fallback).count(),
        failures: rows.iter().filter(|r| r.failure.is_some()).count(),
    }
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Least-squares slope through `(x, y)` pairs; `None` with fewer than two
/// distinct `x` or non-finite values.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_unknown_name() {
        for name in PRESETS {
            assert!(SyntheticDensity::preset(name).is_ok());
        }
        let err = SyntheticDensity::preset("blob").unwrap_err().to_string();
        assert!(err.contains("two-discs") && err.contains("annulus"));
    }

    #[test]
    fn two_disc_density_value() {
        let d = SyntheticDensity::preset("two-discs").unwrap();
        assert!((d.density(Point::new(1.0, 0.2)) - 2.0 / PI).abs() < 1e-12);
        assert_eq!(d.density(Point::new(0.0, 0.0)), 0.0);
        assert!((d.peak_density() - 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn overlapping_discs_rejected() {
        let spec = SyntheticDensity::UniformDiscs {
            discs: vec![
                Disc { center: Point::new(0.0, 0.0), radius: 1.0 },
                Disc { center: Point::new(1.0, 0.0), radius: 1.0 },
            ],
        };
        assert!(SyntheticDensity::new(spec).is_err());
    }

    #[test]
    fn same_seed_same_cloud() {
        let d = SyntheticDensity::preset("bimodal").unwrap();
        assert_eq!(d.sample(100, 3), d.sample(100, 3));
        assert_ne!(d.sample(100, 3), d.sample(100, 4));
    }

    #[test]
    fn median_and_slope() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let pts: Vec<(f64, f64)> = (1..5).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        assert!((loglog_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&pts[..1]), None);
    }

    #[test]
    fn gamma_grid_spans_range() {
        let g = gamma_grid(0.5);
        assert_eq!(g.len(), 60);
        assert!((g[0] - 0.005).abs() < 1e-15 && (g[59] - 1.0).abs() < 1e-12);
    }
}

//! Gaussian kernel density estimation with a diagonal bandwidth matrix,
//! least-squares cross-validation and empirical-quantile thresholds.

use std::f64::consts::PI;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, invalid};
use crate::point::{Point, PointCloud};

/// Kernel terms with `q / 2 > TAIL` contribute below `e^-TAIL` each and are
/// skipped, unless the windowed sum is too small for that to be negligible.
const TAIL: f64 = 36.0;

/// Diagonal bandwidth `H = diag(h1^2, h2^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub h1: f64,
    pub h2: f64,
}

impl Bandwidth {
    pub fn new(h1: f64, h2: f64) -> Result<Self> {
        if !(h1 > 0.0 && h1.is_finite() && h2 > 0.0 && h2.is_finite()) {
            return Err(invalid("bandwidth", format!("need positive finite h1, h2; got ({h1}, {h2})")));
        }
        Ok(Self { h1, h2 })
    }

    /// Normal-reference rule `h_i = sigma_i * n^(-1/6)` for the bivariate
    /// Gaussian kernel.
    pub fn normal_reference(sample: &PointCloud) -> Result<Self> {
        let (s1, s2) = std_devs(sample.points());
        let f = (sample.len() as f64).powf(-1.0 / 6.0);
        Self::new(s1 * f, s2 * f)
    }

    pub fn scaled(self, c: f64) -> Self {
        Self {
            h1: self.h1 * c,
            h2: self.h2 * c,
        }
    }

    /// `|H|^{1/2} = h1 * h2`.
    pub fn det_sqrt(self) -> f64 {
        self.h1 * self.h2
    }
}

fn std_devs(points: &[Point]) -> (f64, f64) {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.x / n, b + p.y / n));
    let (vx, vy) = points.iter().fold((0.0, 0.0), |(a, b), p| {
        (a + (p.x - mx).powi(2), b + (p.y - my).powi(2))
    });
    let d = (n - 1.0).max(1.0);
    ((vx / d).sqrt(), (vy / d).sqrt())
}

/// Fitted Gaussian KDE. Immutable; evaluation is exact direct summation.
#[derive(Debug, Clone)]
pub struct KdeModel {
    sample: PointCloud,
    bandwidth: Bandwidth,
    by_x: Vec<Point>,
}

impl KdeModel {
    pub fn new(sample: PointCloud, bandwidth: Bandwidth) -> Self {
        let mut by_x = sample.points().to_vec();
        by_x.sort_by(|a, b| a.x.total_cmp(&b.x));
        Self {
            sample,
            bandwidth,
            by_x,
        }
    }

    /// Model with the LSCV bandwidth.
    pub fn fit(sample: PointCloud) -> Result<Self> {
        let fit = fit_lscv(&sample)?;
        Ok(Self::new(sample, fit.bandwidth))
    }

    pub fn sample(&self) -> &PointCloud {
        &self.sample
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `f_n(x)`.
    pub fn eval(&self, x: Point) -> f64 {
        let Bandwidth { h1, h2 } = self.bandwidth;
        let n = self.by_x.len();
        let reach = (2.0 * TAIL).sqrt() * h1;
        let lo = self.by_x.partition_point(|p| p.x < x.x - reach);
        let hi = self.by_x.partition_point(|p| p.x <= x.x + reach);
        let kernel = |p: &Point| {
            let u = (x.x - p.x) / h1;
            let v = (x.y - p.y) / h2;
            (-0.5 * (u * u + v * v)).exp()
        };
        let mut sum: f64 = self.by_x[lo..hi].iter().map(kernel).sum();
        let skipped = n - (hi - lo);
        // each skipped term is below e^-TAIL; keep the truncation far below 1e-12 relative
        if skipped > 0 && sum < 1e14 * skipped as f64 * (-TAIL).exp() {
            sum = self.by_x.iter().map(kernel).sum();
        }
        sum / (2.0 * PI * h1 * h2 * n as f64)
    }

    /// Exact `f_n(x) >= t`, usually decided from the window sum and a bound
    /// on the skipped tail without a full summation.
    pub fn exceeds(&self, x: Point, t: f64) -> bool {
        let Bandwidth { h1, h2 } = self.bandwidth;
        let n = self.by_x.len();
        let reach = (2.0 * TAIL).sqrt() * h1;
        let lo = self.by_x.partition_point(|p| p.x < x.x - reach);
        let hi = self.by_x.partition_point(|p| p.x <= x.x + reach);
        let sum: f64 = self.by_x[lo..hi]
            .iter()
            .map(|p| {
                let u = (x.x - p.x) / h1;
                let v = (x.y - p.y) / h2;
                (-0.5 * (u * u + v * v)).exp()
            })
            .sum();
        let norm = 1.0 / (2.0 * PI * h1 * h2 * n as f64);
        let tail = (n - (hi - lo)) as f64 * (-TAIL).exp();
        // margins absorb the rounding of the window sum
        if sum * norm * (1.0 - 1e-12) >= t {
            true
        } else if (sum + tail) * norm * (1.0 + 1e-12) < t {
            false
        } else {
            self.eval(x) >= t
        }
    }

    pub fn eval_many(&self, xs: &[Point]) -> Vec<f64> {
        xs.par_iter().map(|&x| self.eval(x)).collect()
    }

    /// `f_n` at every sample point, in sample order.
    pub fn eval_sample(&self) -> Vec<f64> {
        self.eval_many(self.sample.points())
    }

    /// Draws `m` points from `f_n`: a uniformly chosen sample point plus
    /// `H^{1/2}` times standard-normal noise.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<Point> {
        let pts = self.sample.points();
        let Bandwidth { h1, h2 } = self.bandwidth;
        (0..m)
            .map(|_| {
                let base = pts[rng.random_range(0..pts.len())];
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                Point::new(base.x + h1 * z1, base.y + h2 * z2)
            })
            .collect()
    }
}

/// `f_n(x)` for a fitted model.
pub fn kde_eval(model: &KdeModel, x: Point) -> f64 {
    model.eval(x)
}

/// Closed-form least-squares cross-validation score for the Gaussian
/// kernel:
/// `n^-2 sum_{i,j} phi_{2H}(X_i - X_j) - 2 [n(n-1)]^-1 sum_{i != j} phi_H(X_i - X_j)`.
pub fn lscv_objective(sample: &PointCloud, bw: Bandwidth) -> Result<f64> {
    if sample.len() < 2 {
        return Err(invalid("sample", "LSCV needs at least two points"));
    }
    let mut by_x = sample.points().to_vec();
    by_x.sort_by(|a, b| a.x.total_cmp(&b.x));
    Ok(lscv_sorted(&by_x, bw))
}

fn lscv_sorted(by_x: &[Point], bw: Bandwidth) -> f64 {
    let n = by_x.len();
    let Bandwidth { h1, h2 } = bw;
    // phi_2H needs q/4 <= TAIL
    let reach = (4.0 * TAIL).sqrt() * h1;
    let (inv1, inv2) = (1.0 / h1, 1.0 / h2);
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = by_x[i];
            let (mut s2h, mut sh) = (0.0, 0.0);
            for q in &by_x[i + 1..] {
                let dx = q.x - p.x;
                if dx > reach {
                    break;
                }
                let u = dx * inv1;
                let v = (q.y - p.y) * inv2;
                let d = u * u + v * v;
                if d > 4.0 * TAIL {
                    continue;
                }
                let e = (-0.25 * d).exp();
                s2h += e;
                sh += e * e;
            }
            (s2h, sh)
        })
        .collect();
    // sequential reduction keeps the score independent of the thread schedule
    let (s2h, sh) = rows
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let nf = n as f64;
    let c2h = 1.0 / (4.0 * PI * h1 * h2);
    let ch = 1.0 / (2.0 * PI * h1 * h2);
    (nf * c2h + 2.0 * c2h * s2h) / (nf * nf) - 2.0 * (2.0 * ch * sh) / (nf * (nf - 1.0))
}

/// Result of the LSCV bandwidth search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LscvFit {
    pub bandwidth: Bandwidth,
    pub objective: f64,
    /// Optimum reached by the initial search and by each restart.
    pub restarts: Vec<(Bandwidth, f64)>,
}

const LSCV_RESTARTS: usize = 3;

struct LscvCost<'a> {
    by_x: &'a [Point],
    lower: [f64; 2],
    upper: [f64; 2],
}

impl CostFunction for LscvCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        if (0..2).any(|k| !(self.lower[k]..=self.upper[k]).contains(&p[k])) {
            return Ok(f64::INFINITY);
        }
        Ok(lscv_sorted(
            self.by_x,
            Bandwidth {
                h1: p[0].exp(),
                h2: p[1].exp(),
            },
        ))
    }
}

/// Minimizes the LSCV score over diagonal bandwidths with a log-scale
/// Nelder-Mead search from the normal-reference start, followed by
/// restarts from the incumbent.
pub fn fit_lscv(sample: &PointCloud) -> Result<LscvFit> {
    let n = sample.len();
    if n < 5 {
        return Err(invalid("sample", format!("LSCV needs at least 5 points, got {n}")));
    }
    for (axis, coord) in [("x", 0usize), ("y", 1)] {
        let first = sample.points()[0];
        let get = |p: &Point| if coord == 0 { p.x } else { p.y };
        if sample.points().iter().all(|p| get(p) == get(&first)) {
            return Err(Error::Degenerate(format!(
                "all sample points share the same {axis} coordinate"
            )));
        }
    }
    let start = Bandwidth::normal_reference(sample)?;
    let mut by_x = sample.points().to_vec();
    by_x.sort_by(|a, b| a.x.total_cmp(&b.x));
    let cost = LscvCost {
        by_x: &by_x,
        lower: [(start.h1 * 1e-4).ln(), (start.h2 * 1e-4).ln()],
        upper: [(start.h1 * 1e2).ln(), (start.h2 * 1e2).ln()],
    };

    let mut best = vec![start.h1.ln(), start.h2.ln()];
    let mut best_cost = cost.cost(&best).map_err(|e| Error::Optimizer(e.to_string()))?;
    let mut restarts = Vec::with_capacity(LSCV_RESTARTS + 1);
    for round in 0..=LSCV_RESTARTS {
        let step = if round == 0 { 0.5 } else { 0.2 };
        let simplex = vec![
            best.clone(),
            vec![best[0] + step, best[1]],
            vec![best[0], best[1] + step],
        ];
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-10 * best_cost.abs().max(1e-300))
            .map_err(|e| Error::Optimizer(e.to_string()))?;
        let borrowed = LscvCost { by_x: &by_x, ..cost };
        let res = Executor::new(borrowed, solver)
            .configure(|s| s.max_iters(400))
            .run()
            .map_err(|e| Error::Optimizer(e.to_string()))?;
        let state = res.state();
        let (param, value) = match state.get_best_param() {
            Some(p) => (p.clone(), state.get_best_cost()),
            None => (best.clone(), best_cost),
        };
        restarts.push((
            Bandwidth {
                h1: param[0].exp(),
                h2: param[1].exp(),
            },
            value,
        ));
        if value < best_cost || round == 0 {
            best = param;
            best_cost = value;
        }
    }
    if !best_cost.is_finite() {
        return Err(Error::Optimizer("LSCV search left the admissible range".into()));
    }
    Ok(LscvFit {
        bandwidth: Bandwidth::new(best[0].exp(), best[1].exp())?,
        objective: best_cost,
        restarts,
    })
}

/// Type-1 empirical quantile: the `ceil(tau * n)`-th smallest value.
pub fn quantile_threshold(values: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid("tau", format!("must lie in (0, 1), got {tau}")));
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile of an empty list"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("values", "quantile needs finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[order_index(values.len(), tau) - 1])
}

/// 1-based rank `ceil(tau * n)`, robust to `tau * n` landing a rounding
/// error above an integer.
pub(crate) fn order_index(n: usize, tau: f64) -> usize {
    let x = tau * n as f64;
    let k = if (x - x.round()).abs() <= 1e-9 * x.max(1.0) {
        x.round()
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, n)
}

/// Upper and lower density thresholds, `f_plus >= f_minus >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub f_plus: f64,
    pub f_minus: f64,
}

impl ThresholdPair {
    pub fn new(f_plus: f64, f_minus: f64) -> Result<Self> {
        if !(f_plus >= f_minus && f_minus >= 0.0 && f_plus.is_finite()) {
            return Err(invalid(
                "thresholds",
                format!("need f_plus >= f_minus >= 0, got ({f_plus}, {f_minus})"),
            ));
        }
        Ok(Self { f_plus, f_minus })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(xy: &[(f64, f64)]) -> PointCloud {
        PointCloud::from_xy(xy).unwrap()
    }

    #[test]
    fn single_point_mode() {
        let m = KdeModel::new(cloud(&[(0.0, 0.0)]), Bandwidth::new(1.0, 1.0).unwrap());
        assert!((m.eval(Point::new(0.0, 0.0)) - 0.159154943091895).abs() < 1e-12);
    }

    #[test]
    fn far_queries_fall_back_to_full_sum() {
        let m = KdeModel::new(cloud(&[(0.0, 0.0), (1.0, 0.0)]), Bandwidth::new(0.1, 0.1).unwrap());
        let x = Point::new(2.0, 0.0);
        let literal: f64 = [0.0f64, 1.0]
            .iter()
            .map(|&px| (-0.5 * ((2.0 - px) / 0.1f64).powi(2)).exp())
            .sum::<f64>()
            / (2.0 * PI * 0.01 * 2.0);
        assert!(literal > 0.0);
        assert!((m.eval(x) - literal).abs() <= 1e-12 * literal);
    }

    #[test]
    fn symmetric_pair() {
        let m = KdeModel::new(cloud(&[(-0.7, 0.0), (0.7, 0.0)]), Bandwidth::new(0.5, 0.8).unwrap());
        for (x, y) in [(0.0, 0.3), (0.4, -1.1), (1.3, 0.2)] {
            let v = m.eval(Point::new(x, y));
            assert!((v - m.eval(Point::new(x, -y))).abs() < 1e-15);
            assert!((v - m.eval(Point::new(-x, y))).abs() < 1e-15);
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile_threshold(&[4.0, 2.0, 1.0, 3.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile_threshold(&[4.0, 2.0, 1.0, 3.0], 1e-9).unwrap(), 1.0);
        assert_eq!(quantile_threshold(&[4.0, 2.0, 1.0, 3.0], 0.75).unwrap(), 3.0);
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile_threshold(&ten, 0.3).unwrap(), 3.0);
        assert!(quantile_threshold(&ten, 0.0).is_err());
        assert!(quantile_threshold(&ten, 1.0).is_err());
        assert!(quantile_threshold(&[], 0.5).is_err());
    }

    #[test]
    fn lscv_needs_two_points() {
        let bw = Bandwidth::new(1.0, 1.0).unwrap();
        assert!(lscv_objective(&cloud(&[(0.0, 0.0)]), bw).is_err());
    }

    #[test]
    fn fit_rejects_degenerate_samples() {
        assert!(fit_lscv(&cloud(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.5), (3.0, 0.1)])).is_err());
        let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0)).collect();
        assert!(matches!(fit_lscv(&cloud(&flat)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn bandwidth_validation() {
        assert!(Bandwidth::new(0.0, 1.0).is_err());
        assert!(Bandwidth::new(1.0, f64::NAN).is_err());
        assert!(ThresholdPair::new(0.1, 0.2).is_err());
        assert!(ThresholdPair::new(0.2, -0.1).is_err());
        assert!(ThresholdPair::new(0.2, 0.2).is_ok());
    }
}

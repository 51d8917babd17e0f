//! Bootstrap selection of the trimming quantiles `(tau_plus, tau_minus)` and
//! the neighbour count `k` by minimizing a Monte-Carlo estimate of the
//! level-set error in a smoothed-bootstrap world.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{Bandwidth, KdeModel, ThresholdPair, fit_lscv, quantile_threshold};
use crate::error::{Error, Result, invalid};
use crate::estimator::{Bracket, estimate_level_set};
use crate::geometry::{RConvexRegion, RasterMask};
use crate::point::{BBox, Point, PointCloud};
use crate::splitter::{Label, SplitMode, SplitSample};

/// How a replicate's estimate is scored against `L*(tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMetric {
    /// Fraction of `M` draws from `f_n` on which the estimate and `L*`
    /// disagree (the `f_n`-probability of the symmetric difference).
    Probability,
    /// Fraction of a uniform raster over the padded sample window on which
    /// they disagree.
    Lebesgue,
}

/// Raster side used by [`ErrorMetric::Lebesgue`].
const LEBESGUE_RESOLUTION: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub tau: f64,
    /// Grid half-size `I`: `tau_plus = tau + j delta`, `tau_minus = tau - j delta`, `j = 0..=I`.
    pub i: usize,
    pub delta: f64,
    pub b: usize,
    pub m_mc: usize,
    pub k_grid: Vec<usize>,
    pub j: usize,
    pub seed: u64,
    pub metric: ErrorMetric,
}

impl CalibrationConfig {
    /// Defaults for a sample of size `n`: `I = 10`,
    /// `delta = min((1 - tau - 3/n) / I, (tau - 3/n) / I, 0.01)`,
    /// `B = 500`, `M = max(3000, 3n)`, `k in {1, 3, 5}`, `J = 40`.
    pub fn defaults(tau: f64, n: usize, seed: u64) -> Self {
        let i = 10;
        Self {
            tau,
            i,
            delta: default_delta(tau, n, i),
            b: 500,
            m_mc: 3000.max(3 * n),
            k_grid: vec![1, 3, 5],
            j: 40,
            seed,
            metric: ErrorMetric::Probability,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 30 {
            return Err(invalid("sample", format!("calibration needs n >= 30, got {n}")));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(invalid("tau", format!("must lie in (0, 1), got {}", self.tau)));
        }
        if self.i == 0 || !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", "need I >= 1 and a positive grid step"));
        }
        let nf = n as f64;
        let spread = self.i as f64 * self.delta;
        // a relative slack absorbs the rounding of the default step
        let slack = 1e-12;
        if self.tau + spread > (nf - 1.0) / nf + slack || self.tau - spread < 1.0 / nf - slack {
            return Err(invalid(
                "delta",
                format!(
                    "grid tau +- I*delta = [{}, {}] leaves [1/n, (n-1)/n]",
                    self.tau - spread,
                    self.tau + spread
                ),
            ));
        }
        if self.b == 0 || self.m_mc == 0 || self.j == 0 {
            return Err(invalid("B", "B, M and J must be positive"));
        }
        if self.k_grid.is_empty() || self.k_grid.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(invalid("k", "k grid must hold odd positive values"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        (self.i + 1) * (self.i + 1) * self.k_grid.len()
    }

    pub fn tau_plus(&self, j1: usize) -> f64 {
        self.tau + j1 as f64 * self.delta
    }

    pub fn tau_minus(&self, j2: usize) -> f64 {
        self.tau - j2 as f64 * self.delta
    }

    /// Flat table index of cell `(j1, j2, j3)`.
    pub fn cell_index(&self, j1: usize, j2: usize, j3: usize) -> usize {
        (j1 * (self.i + 1) + j2) * self.k_grid.len() + j3
    }
}

pub fn default_delta(tau: f64, n: usize, i: usize) -> f64 {
    let nf = n as f64;
    let i = i as f64;
    ((1.0 - tau - 3.0 / nf) / i).min((tau - 3.0 / nf) / i).min(0.01)
}

/// Averaged error of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCell {
    pub j1: usize,
    pub j2: usize,
    pub j3: usize,
    pub tau_plus: f64,
    pub tau_minus: f64,
    pub k: usize,
    pub mean_error: f64,
    pub replicates: usize,
    /// Replicates in which the cell failed and scored 1.
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub config: CalibrationConfig,
    pub n: usize,
    pub bandwidth: Bandwidth,
    /// Monte-Carlo threshold `f*_tau` of `L*(tau)` in the bootstrap world.
    pub f_star: f64,
    pub tau_plus_hat: f64,
    pub tau_minus_hat: f64,
    pub k_hat: usize,
    pub best_index: usize,
    pub min_mean_error: f64,
    /// Thresholds from the original sample's `f_n` quantiles.
    pub thresholds: ThresholdPair,
    pub error_table: Vec<ErrorCell>,
    /// Fraction of (cell, replicate) evaluations that failed.
    pub degenerate_fraction: f64,
}

/// `f*_tau`: the `tau`-quantile of `f_n` over `m` draws from `f_n`.
pub fn mc_threshold<R: Rng + ?Sized>(model: &KdeModel, tau: f64, m: usize, rng: &mut R) -> Result<f64> {
    if m == 0 {
        return Err(invalid("M", "Monte-Carlo size must be positive"));
    }
    let draws = model.draw(rng, m);
    quantile_threshold(&model.eval_many(&draws), tau)
}

/// Monte-Carlo error of `member` against `L* = {f_n >= f_star}`: the
/// fraction of `m` draws from `f_n` outside `L*` but inside the estimate or
/// inside `L*` but outside the estimate.
pub fn mc_measure_error<R, F>(model: &KdeModel, f_star: f64, member: F, m: usize, rng: &mut R) -> Result<f64>
where
    R: Rng + ?Sized,
    F: Fn(Point) -> bool + Sync,
{
    if m == 0 {
        return Err(invalid("M", "Monte-Carlo size must be positive"));
    }
    let ys = model.draw(rng, m);
    let inside: Vec<bool> = model.eval_many(&ys).iter().map(|&v| v >= f_star).collect();
    Ok(disagreement(&ys, &inside, member))
}

fn disagreement<F: Fn(Point) -> bool + Sync>(points: &[Point], truth: &[bool], member: F) -> f64 {
    let wrong = points
        .par_iter()
        .zip(truth)
        .filter(|(p, t)| member(**p) != **t)
        .count();
    wrong as f64 / points.len() as f64
}

/// Reference points and `L*` labels shared by every cell of a replicate.
struct Scorer {
    points: Vec<Point>,
    inside: Vec<bool>,
}

impl Scorer {
    fn score(&self, region: &RConvexRegion) -> f64 {
        disagreement(&self.points, &self.inside, |p| region.contains(p))
    }
}

fn lebesgue_scorer(model: &KdeModel, f_star: f64) -> Scorer {
    let grid = RasterMask::empty(lebesgue_window(model), LEBESGUE_RESOLUTION);
    let points: Vec<Point> = (0..LEBESGUE_RESOLUTION * LEBESGUE_RESOLUTION)
        .map(|c| grid.cell_center(c % LEBESGUE_RESOLUTION, c / LEBESGUE_RESOLUTION))
        .collect();
    let inside = points.par_iter().map(|&p| model.exceeds(p, f_star)).collect();
    Scorer { points, inside }
}

/// Errors of every grid cell in one bootstrap replicate, with failure flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateErrors {
    pub errors: Vec<f64>,
    pub degenerate: Vec<bool>,
}

/// Replicate `index` (ChaCha8 stream `index + 1` of the seed): draws a
/// bootstrap sample from `f_n`, refits the bandwidth by LSCV, and scores
/// every `(tau_plus, tau_minus, k)` cell on one shared Monte-Carlo draw.
pub fn bootstrap_replicate(model: &KdeModel, cfg: &CalibrationConfig, f_star: f64, index: usize) -> Result<ReplicateErrors> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let n = model.len();
    let star = PointCloud::new(model.draw(&mut rng, n))?;
    let scorer = match cfg.metric {
        ErrorMetric::Probability => {
            let points = model.draw(&mut rng, cfg.m_mc);
            let inside = model.eval_many(&points).iter().map(|&v| v >= f_star).collect();
            Scorer { points, inside }
        }
        ErrorMetric::Lebesgue => lebesgue_scorer(model, f_star),
    };
    let cells = cfg.cell_count();
    let Ok(fit) = fit_lscv(&star) else {
        return Ok(ReplicateErrors {
            errors: vec![1.0; cells],
            degenerate: vec![true; cells],
        });
    };
    let star_model = KdeModel::new(star.clone(), fit.bandwidth);
    let values = star_model.eval_sample();
    let bracket = Bracket::default_for(star.points());
    let mut errors = vec![1.0; cells];
    let mut degenerate = vec![true; cells];
    // identical final labellings share one estimate
    let mut seen: HashMap<Vec<Label>, Option<f64>> = HashMap::new();
    for j1 in 0..=cfg.i {
        let f_plus = quantile_threshold(&values, cfg.tau_plus(j1))?;
        for j2 in 0..=cfg.i {
            let f_minus = quantile_threshold(&values, cfg.tau_minus(j2))?;
            let split = SplitSample::from_values(star.points(), &values, f_plus, f_minus, SplitMode::Calibrated)?;
            for (j3, &k) in cfg.k_grid.iter().enumerate() {
                let Ok(labelled) = split.classify_remainder(k) else {
                    continue;
                };
                let outcome = *seen.entry(labelled.labels().to_vec()).or_insert_with(|| {
                    estimate_level_set(&labelled, 1.0, cfg.j, Some(bracket))
                        .ok()
                        .map(|est| scorer.score(&est.region))
                });
                if let Some(e) = outcome {
                    let c = cfg.cell_index(j1, j2, j3);
                    errors[c] = e;
                    degenerate[c] = false;
                }
            }
        }
    }
    Ok(ReplicateErrors { errors, degenerate })
}

/// Full procedure: LSCV fit, `f*_tau` from ChaCha8 stream 0, `B` parallel
/// replicates, grid argmin of the mean error (ties: smaller total trimming
/// `|tau_plus - tau| + |tau - tau_minus|`, then smaller `k`), and thresholds
/// from the original sample's `f_n` quantiles at the selected levels.
pub fn calibrate(sample: &PointCloud, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    let n = sample.len();
    cfg.validate(n)?;
    let model = KdeModel::fit(sample.clone())?;
    calibrate_model(&model, cfg)
}

/// [`calibrate`] for an already fitted model.
pub fn calibrate_model(model: &KdeModel, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    let n = model.len();
    cfg.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let f_star = mc_threshold(model, cfg.tau, cfg.m_mc, &mut rng)?;
    let reps: Vec<ReplicateErrors> = (0..cfg.b)
        .into_par_iter()
        .map(|b| bootstrap_replicate(model, cfg, f_star, b))
        .collect::<Result<_>>()?;

    let cells = cfg.cell_count();
    let mut table = Vec::with_capacity(cells);
    for j1 in 0..=cfg.i {
        for j2 in 0..=cfg.i {
            for (j3, &k) in cfg.k_grid.iter().enumerate() {
                let c = cfg.cell_index(j1, j2, j3);
                // replicate order keeps the sum schedule-independent
                let total: f64 = reps.iter().map(|r| r.errors[c]).sum();
                table.push(ErrorCell {
                    j1,
                    j2,
                    j3,
                    tau_plus: cfg.tau_plus(j1),
                    tau_minus: cfg.tau_minus(j2),
                    k,
                    mean_error: total / cfg.b as f64,
                    replicates: cfg.b,
                    degenerate: reps.iter().filter(|r| r.degenerate[c]).count(),
                });
            }
        }
    }
    let failed: usize = table.iter().map(|c| c.degenerate).sum();
    if failed == cells * cfg.b {
        return Err(Error::AllDegenerate {
            cells,
            replicates: cfg.b,
        });
    }
    let best_index = select_best(&table);
    let best = &table[best_index];
    let values = model.eval_sample();
    let thresholds = ThresholdPair::new(
        quantile_threshold(&values, best.tau_plus)?,
        quantile_threshold(&values, best.tau_minus)?,
    )?;
    Ok(CalibrationResult {
        config: cfg.clone(),
        n,
        bandwidth: model.bandwidth(),
        f_star,
        tau_plus_hat: best.tau_plus,
        tau_minus_hat: best.tau_minus,
        k_hat: best.k,
        best_index,
        min_mean_error: best.mean_error,
        thresholds,
        error_table: table,
        degenerate_fraction: failed as f64 / (cells * cfg.b) as f64,
    })
}

/// Index of the selected cell under the tie-breaking order.
pub fn select_best(table: &[ErrorCell]) -> usize {
    let key = |c: &ErrorCell| (c.mean_error, c.j1 + c.j2, c.k);
    (0..table.len())
        .min_by(|&a, &b| {
            let (ka, kb) = (key(&table[a]), key(&table[b]));
            ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(ka.2.cmp(&kb.2))
        })
        .expect("table is non-empty")
}

/// Window used when scoring on the Lebesgue raster.
pub fn lebesgue_window(model: &KdeModel) -> BBox {
    let h = model.bandwidth();
    model.sample().bbox().padded(3.0 * h.h1.max(h.h2))
}

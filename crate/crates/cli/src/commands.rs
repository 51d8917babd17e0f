//! The `estimate`, `simulate` and `report` pipelines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use levelset::calibration::calibrate_model;
use levelset::density::{KdeModel, quantile_threshold};
use levelset::estimator::{Bracket, estimate_level_set};
use levelset::geometry::{ArcPolygonBoundary, RasterMask, convex_hull};
use levelset::splitter::{MarginSchedule, auto_margin, dn, split_calibrated, split_margin};
use levelset::synthref::{
    ConvergenceConfig, ConvergenceReport, Level, SyntheticDensity, gamma_grid, r0_grid_oracle, run_convergence,
    true_level_mask,
};
use levelset::{BBox, PointCloud};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ingest::ingest_csv;
use crate::render::render_svg;
use crate::report::{InputSummary, Metrics, RegionSummary, Report, SCHEMA_VERSION, SplitSummary, ThresholdSummary};

/// Everything `estimate` writes.
#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub report: Report,
    pub geojson: Value,
    pub svg: String,
}

impl EstimateOutput {
    /// Writes `report.json`, `region.geojson` and `figure.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut geo = serde_json::to_string_pretty(&self.geojson)?;
        geo.push('\n');
        for (name, body) in [
            ("report.json", self.report.to_json()?),
            ("region.geojson", geo),
            ("figure.svg", self.svg.clone()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::io(path, e))?;
        }
        Ok(())
    }
}

struct Clock {
    on: bool,
    last: Instant,
    stages: BTreeMap<String, f64>,
}

impl Clock {
    fn new(on: bool) -> Self {
        Self {
            on,
            last: Instant::now(),
            stages: BTreeMap::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        if self.on {
            self.stages.insert(stage.into(), (now - self.last).as_secs_f64());
        }
        self.last = now;
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.on.then_some(self.stages)
    }
}

/// Truth raster and its description.
struct Truth {
    mask: RasterMask,
    label: String,
    threshold: Option<f64>,
}

fn truth_density(cfg: &RunConfig) -> Result<Option<SyntheticDensity>> {
    cfg.truth_density
        .as_deref()
        .map(SyntheticDensity::preset)
        .transpose()
        .map_err(Into::into)
}

/// fit, split (calibrated or margin), estimate, rasterize, score.
pub fn cmd_estimate(cfg: &RunConfig, timings: bool) -> Result<EstimateOutput> {
    cfg.validate()?;
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("an input CSV is required".into()))?;
    let mut clock = Clock::new(timings);
    let ingested = ingest_csv(input)?;
    let sample = ingested.cloud(cfg.class)?;
    let n = sample.len();
    if n < 5 {
        return Err(CliError::Config(format!("need at least 5 points, got {n}")));
    }
    clock.lap("ingest");

    let model = KdeModel::fit(sample.clone())?;
    clock.lap("bandwidth");

    let margin_mode = cfg.t.is_some() || cfg.no_calibrate;
    let (split, thresholds, calibration) = if margin_mode {
        let t = match cfg.t {
            Some(t) => t,
            None => quantile_threshold(&model.eval_sample(), cfg.tau.expect("validated"))?,
        };
        let (margin, m) = match cfg.margin_m {
            Some(m) if m == 0.0 => (0.0, 0.0),
            Some(m) => (dn(&MarginSchedule::new(m)?, n)?, m),
            None => {
                let sched = auto_margin(&model, 2, cfg.seed)?;
                (dn(&sched, n)?, sched.m)
            }
        };
        let split = split_margin(&model, &sample, t, margin)?;
        let summary = ThresholdSummary {
            mode: "margin".into(),
            tau: cfg.tau,
            t: Some(t),
            f_plus: split.t_plus(),
            f_minus: split.t_minus(),
            dn: Some(margin),
            margin_m: Some(m),
        };
        (split, summary, None)
    } else {
        let ccfg = cfg.calibration(n)?;
        let result = calibrate_model(&model, &ccfg)?;
        clock.lap("calibration");
        let split = split_calibrated(&model, &sample, result.thresholds)?.classify_remainder(result.k_hat)?;
        let summary = ThresholdSummary {
            mode: "calibrated".into(),
            tau: cfg.tau,
            t: None,
            f_plus: result.thresholds.f_plus,
            f_minus: result.thresholds.f_minus,
            dn: None,
            margin_m: None,
        };
        (split, summary, Some(result))
    };
    clock.lap("split");

    let bracket = cfg.bracket.map(|[a, b]| Bracket::new(a, b)).transpose()?;
    let est = estimate_level_set(&split, cfg.nu, cfg.j, bracket)?;
    clock.lap("estimate");

    // the estimate lies in conv(plus), so the data window suffices; the pad
    // leaves room around the hull and covers the kernel support
    let h = model.bandwidth();
    let mut window = sample.bbox().padded(3.0 * h.h1.max(h.h2));
    let density = truth_density(cfg)?;
    if let Some(d) = &density {
        window = window.union(&d.truth_bbox());
    }
    let pbm_truth = match (&cfg.truth_pbm, cfg.truth_bbox) {
        (Some(path), Some([x0, y0, x1, y1])) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            Some(RasterMask::from_pbm(&bytes, BBox::new(x0, y0, x1, y1))?)
        }
        _ => None,
    };
    let (raster_bbox, resolution) = match &pbm_truth {
        Some(m) => (m.bbox, m.resolution),
        None => (window, cfg.resolution),
    };
    let raster = est.region.rasterize(raster_bbox, resolution);
    let chord_tol = 0.25 * raster.cell_size();
    let boundary = region_boundary(&est, &split_plus_cloud(&est)?, &raster);
    clock.lap("raster");

    let truth = match (density, pbm_truth) {
        (Some(d), _) => {
            let level = match cfg.t {
                Some(t) => Level::Threshold(t),
                None => Level::Content(cfg.tau.expect("validated")),
            };
            let tm = true_level_mask(&d, level, raster_bbox, resolution)?;
            Some(Truth {
                mask: tm.mask,
                label: cfg.truth_density.clone().unwrap_or_default(),
                threshold: Some(tm.threshold),
            })
        }
        (None, Some(mask)) => Some(Truth {
            mask,
            label: cfg.truth_pbm.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            threshold: None,
        }),
        _ => None,
    };
    let metrics = truth
        .map(|t| -> Result<Metrics> {
            let d_h = if raster.is_empty() || t.mask.is_empty() {
                None
            } else {
                Some(raster.hausdorff(&t.mask)?)
            };
            Ok(Metrics {
                truth: t.label,
                truth_threshold: t.threshold,
                truth_area: t.mask.area(),
                d_mu: raster.measure_distance(&t.mask)?,
                d_h,
            })
        })
        .transpose()?;
    clock.lap("metrics");

    let region = RegionSummary {
        radius: (!est.region.is_convex()).then(|| est.region.radius()),
        convex: est.region.is_convex(),
        area: boundary.area(),
        components: raster.connected_components(),
        holes: boundary.rings.iter().filter(|r| r.signed_area() < 0.0).count(),
        raster_bbox,
        raster_resolution: resolution,
        raster_area: raster.area(),
    };
    let split_summary = SplitSummary {
        n_plus: split.plus().len(),
        n_minus: split.minus().len(),
        n_unassigned: split.unassigned().len(),
        minus_vacuous: split.minus_vacuous(),
        knn_k: split.knn_k(),
    };
    let svg = render_svg(raster_bbox, sample.points(), split.labels(), &boundary, chord_tol);
    let geojson = boundary.to_geojson(chord_tol);
    let report = Report {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config: cfg.clone(),
        input: InputSummary {
            path: Some(input.display().to_string()),
            n,
            bbox: sample.bbox(),
            diagnostics: ingested.diagnostics.clone(),
        },
        bandwidth: h,
        thresholds,
        calibration,
        split: split_summary,
        nu: cfg.nu,
        radius_estimate: est.radius_estimate.clone(),
        region,
        metrics,
        timings: clock.finish(),
    };
    Ok(EstimateOutput { report, geojson, svg })
}

fn split_plus_cloud(est: &levelset::estimator::LevelSetEstimate) -> Result<PointCloud> {
    Ok(PointCloud::new(est.split.plus().to_vec())?)
}

/// Exact arc boundary when available; the convex hull for an infinite
/// radius; the raster outline for collinear or failing cases.
fn region_boundary(
    est: &levelset::estimator::LevelSetEstimate,
    plus: &PointCloud,
    raster: &RasterMask,
) -> ArcPolygonBoundary {
    if est.region.is_convex() {
        convex_hull(plus)
    } else {
        est.region.boundary().unwrap_or_else(|_| raster.boundary())
    }
}

/// Level of a simulation: a raw threshold, a fraction of the peak density,
/// or a probability content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimLevel {
    Threshold(f64),
    PeakFraction(f64),
    Content(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub density: String,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub level: SimLevel,
    pub nu: f64,
    pub seed: u64,
    pub resolution: usize,
    pub j: usize,
    /// Raster side for the grid oracle of `r_0`; no oracle when absent.
    pub oracle_resolution: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub schema_version: u64,
    pub r0_oracle: Option<f64>,
    pub experiment: ConvergenceReport,
}

pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<SimulateOutput> {
    let density = SyntheticDensity::preset(&cfg.density)?;
    let level = match cfg.level {
        SimLevel::Threshold(t) => Level::Threshold(t),
        SimLevel::PeakFraction(f) => Level::Threshold(f * density.peak_density()),
        SimLevel::Content(tau) => Level::Content(tau),
    };
    let r0_oracle = cfg
        .oracle_resolution
        .map(|res| -> Result<f64> {
            let truth = true_level_mask(&density, level, density.truth_bbox(), res)?;
            Ok(r0_grid_oracle(&truth.mask, &gamma_grid(density.characteristic_length()))?)
        })
        .transpose()?;
    let experiment = run_convergence(&ConvergenceConfig {
        density,
        level,
        n_grid: cfg.n_grid.clone(),
        replicates: cfg.replicates,
        nu: cfg.nu,
        seed: cfg.seed,
        resolution: cfg.resolution,
        j: cfg.j,
        r0_reference: r0_oracle.filter(|&r| r > 0.0),
    })?;
    Ok(SimulateOutput {
        schema_version: SCHEMA_VERSION,
        r0_oracle,
        experiment,
    })
}

impl SimulateOutput {
    /// Writes `simulate.json` and `replicates.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let json_path = dir.join("simulate.json");
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        std::fs::write(&json_path, body).map_err(|e| CliError::io(json_path, e))?;
        let csv_path = dir.join("replicates.csv");
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_io(&csv_path, e))?;
        for row in &self.experiment.rows {
            w.serialize(row).map_err(|e| csv_io(&csv_path, e))?;
        }
        w.flush().map_err(|e| CliError::io(csv_path, e))?;
        Ok(())
    }

    /// Per-size medians as a text table.
    pub fn summary(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let mut s = String::from("n        rel_err  d_mu     plugin   d_H      contain  2-comp   convex  failed\n");
        for m in &self.experiment.summaries {
            s.push_str(&format!(
                "{:<8} {:<8} {:<8.4} {:<8.4} {:<8} {:<8.2} {:<8.2} {:<7} {}\n",
                m.n,
                opt(m.median_rel_error),
                m.median_d_mu,
                m.median_plugin_d_mu,
                opt(m.median_d_h),
                m.containment_rate,
                m.two_component_rate,
                m.convex_fallbacks,
                m.failures
            ));
        }
        s.push_str(&format!(
            "r0 oracle {}  d_mu slope {}  plugin slope {}\n",
            opt(self.r0_oracle),
            opt(self.experiment.d_mu_slope),
            opt(self.experiment.plugin_d_mu_slope)
        ));
        s
    }
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e.to_string()))
}

pub fn cmd_report(path: &Path) -> Result<String> {
    Ok(crate::report::format_report(&Report::load(path)?))
}

/// Caps the global worker pool at `LEVELSET_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("LEVELSET_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("LEVELSET_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

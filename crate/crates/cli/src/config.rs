//! Flat run configuration shared by the config file and the command line.

use std::path::{Path, PathBuf};

use levelset::calibration::{CalibrationConfig, ErrorMetric, default_delta};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Which rows of a labelled input to analyse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ClassFilter {
    #[default]
    All,
    Case,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub class: ClassFilter,
    /// Probability content: the level set holds mass `1 - tau`.
    pub tau: Option<f64>,
    /// Raw density threshold (margin split, no calibration).
    pub t: Option<f64>,
    pub nu: f64,
    pub i: usize,
    /// Calibration grid step; derived from `tau`, `n` and `I` when absent.
    pub delta: Option<f64>,
    pub b: usize,
    /// Monte-Carlo size; `max(3000, 3n)` when absent.
    pub m_mc: Option<usize>,
    pub k_grid: Vec<usize>,
    pub j: usize,
    pub metric: ErrorMetric,
    pub no_calibrate: bool,
    /// Margin constant `M`; estimated by a smoothed bootstrap when absent.
    pub margin_m: Option<f64>,
    pub bracket: Option<[f64; 2]>,
    pub resolution: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Named synthetic density whose level set is the truth for metrics.
    pub truth_density: Option<String>,
    /// Truth as a portable bitmap over `truth_bbox`.
    pub truth_pbm: Option<PathBuf>,
    pub truth_bbox: Option<[f64; 4]>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            class: ClassFilter::All,
            tau: None,
            t: None,
            nu: 1.0,
            i: 10,
            delta: None,
            b: 500,
            m_mc: None,
            k_grid: vec![1, 3, 5],
            j: 40,
            metric: ErrorMetric::Probability,
            no_calibrate: false,
            margin_m: None,
            bracket: None,
            resolution: 512,
            seed: 0,
            out: PathBuf::from("out"),
            truth_density: None,
            truth_pbm: None,
            truth_bbox: None,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| bad(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    /// Range checks that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        match (self.tau, self.t) {
            (Some(_), Some(_)) => return Err(bad("give either --tau or --t, not both")),
            (None, None) => return Err(bad("one of --tau (probability content) or --t (raw threshold) is required")),
            (Some(tau), None) if !(tau > 0.0 && tau < 1.0) => {
                return Err(bad(format!("--tau must lie in (0, 1), got {tau}")));
            }
            (None, Some(t)) if !(t > 0.0 && t.is_finite()) => {
                return Err(bad(format!("--t must be a positive density value, got {t}")));
            }
            _ => {}
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(bad(format!("--nu must lie in (0, 1], got {}", self.nu)));
        }
        if self.i == 0 || self.b == 0 {
            return Err(bad("--I and --B must be positive"));
        }
        if self.k_grid.is_empty() || self.k_grid.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(bad(format!("--k needs odd positive values, got {:?}", self.k_grid)));
        }
        if !(1..=200).contains(&self.j) {
            return Err(bad(format!("--J must lie in 1..=200, got {}", self.j)));
        }
        if !(16..=8192).contains(&self.resolution) {
            return Err(bad(format!("--resolution must lie in 16..=8192, got {}", self.resolution)));
        }
        if let Some(d) = self.delta
            && !(d > 0.0 && d < 1.0)
        {
            return Err(bad(format!("delta must lie in (0, 1), got {d}")));
        }
        if self.m_mc == Some(0) {
            return Err(bad("--M must be positive"));
        }
        if let Some(m) = self.margin_m
            && !(m >= 0.0 && m.is_finite())
        {
            return Err(bad(format!("margin_m must be non-negative, got {m}")));
        }
        if let Some([rm, r_max]) = self.bracket
            && !(rm > 0.0 && rm < r_max && r_max.is_finite())
        {
            return Err(bad(format!("--bracket needs 0 < rm < rM, got {rm},{r_max}")));
        }
        if self.truth_pbm.is_some() && self.truth_bbox.is_none() {
            return Err(bad("truth_pbm needs truth_bbox [xmin, ymin, xmax, ymax]"));
        }
        if self.truth_pbm.is_some() && self.truth_density.is_some() {
            return Err(bad("give either truth_pbm or --truth-density, not both"));
        }
        if let Some([x0, y0, x1, y1]) = self.truth_bbox
            && !(x0 < x1 && y0 < y1)
        {
            return Err(bad("truth_bbox must have xmin < xmax and ymin < ymax"));
        }
        Ok(())
    }

    /// Calibration settings for a sample of size `n`.
    pub fn calibration(&self, n: usize) -> Result<CalibrationConfig> {
        let tau = self.tau.ok_or_else(|| bad("calibration needs --tau"))?;
        let mut cfg = CalibrationConfig::defaults(tau, n, self.seed);
        cfg.i = self.i;
        cfg.delta = self.delta.unwrap_or_else(|| default_delta(tau, n, self.i));
        cfg.b = self.b;
        if let Some(m) = self.m_mc {
            cfg.m_mc = m;
        }
        cfg.k_grid = self.k_grid.clone();
        cfg.j = self.j;
        cfg.metric = self.metric;
        cfg.validate(n)?;
        Ok(cfg)
    }
}

//! Versioned JSON run report and its plain-text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use levelset::BBox;
use levelset::calibration::CalibrationResult;
use levelset::density::Bandwidth;
use levelset::estimator::RadiusEstimate;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ingest::Diagnostics;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub path: Option<String>,
    pub n: usize,
    pub bbox: BBox,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    /// `calibrated` or `margin`.
    pub mode: String,
    pub tau: Option<f64>,
    pub t: Option<f64>,
    pub f_plus: f64,
    pub f_minus: f64,
    pub dn: Option<f64>,
    pub margin_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_unassigned: usize,
    pub minus_vacuous: bool,
    pub knn_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    /// `nu * r_hat`; absent for the convex hull.
    pub radius: Option<f64>,
    pub convex: bool,
    pub area: f64,
    pub components: usize,
    pub holes: usize,
    pub raster_bbox: BBox,
    pub raster_resolution: usize,
    pub raster_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub truth: String,
    pub truth_threshold: Option<f64>,
    pub truth_area: f64,
    pub d_mu: f64,
    pub d_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u64,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub input: InputSummary,
    pub bandwidth: Bandwidth,
    pub thresholds: ThresholdSummary,
    pub calibration: Option<CalibrationResult>,
    pub split: SplitSummary,
    pub nu: f64,
    pub radius_estimate: RadiusEstimate,
    pub region: RegionSummary,
    pub metrics: Option<Metrics>,
    /// Wall-clock seconds per stage; only recorded on request since they
    /// break byte-identical reruns.
    pub timings: Option<BTreeMap<String, f64>>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != SCHEMA_VERSION {
            return Err(CliError::Schema {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        "INFINITY".into()
    } else {
        format!("{v:.6}")
    }
}

/// Two-column table of the report's main quantities. Optional sections
/// contribute rows only when present.
pub fn format_report(r: &Report) -> String {
    let mut rows: Vec<(String, String)> = vec![
        ("n".into(), r.input.n.to_string()),
        ("duplicates".into(), r.input.diagnostics.duplicate_count.to_string()),
        ("bandwidth (h1, h2)".into(), format!("{}, {}", num(r.bandwidth.h1), num(r.bandwidth.h2))),
        ("mode".into(), r.thresholds.mode.clone()),
    ];
    if let Some(tau) = r.thresholds.tau {
        rows.push(("tau".into(), num(tau)));
    }
    if let Some(t) = r.thresholds.t {
        rows.push(("t".into(), num(t)));
    }
    if let Some(dn) = r.thresholds.dn {
        rows.push(("D_n".into(), num(dn)));
    }
    rows.push((
        "thresholds (f+, f-)".into(),
        format!("{}, {}", num(r.thresholds.f_plus), num(r.thresholds.f_minus)),
    ));
    if let Some(c) = &r.calibration {
        rows.push((
            "k, tau+, tau-".into(),
            format!("{}, {}, {}", c.k_hat, num(c.tau_plus_hat), num(c.tau_minus_hat)),
        ));
        rows.push(("calibration error".into(), num(c.min_mean_error)));
    }
    rows.push((
        "split (+ / - / ?)".into(),
        format!("{} / {} / {}", r.split.n_plus, r.split.n_minus, r.split.n_unassigned),
    ));
    rows.push(("r0_hat".into(), num(r.radius_estimate.r_hat)));
    rows.push(("nu".into(), num(r.nu)));
    rows.push(("radius".into(), r.region.radius.map_or("INFINITY".into(), num)));
    rows.push(("area".into(), num(r.region.area)));
    rows.push(("components".into(), r.region.components.to_string()));
    if let Some(m) = &r.metrics {
        rows.push(("truth".into(), m.truth.clone()));
        rows.push(("d_mu".into(), num(m.d_mu)));
        if let Some(dh) = m.d_h {
            rows.push(("d_H".into(), num(dh)));
        }
    }
    if let Some(t) = &r.timings {
        for (stage, secs) in t {
            rows.push((format!("time {stage} (s)"), format!("{secs:.3}")));
        }
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out
}

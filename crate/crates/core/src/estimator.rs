//! Bisection estimate of the largest radius whose r-convex hull of the plus
//! points avoids every minus point, and the resulting level-set estimate.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, invalid};
use crate::geometry::{RConvexRegion, SiteSet};
use crate::point::{BBox, Point};
use crate::splitter::SplitSample;

/// Upper-radius doublings tried when the initial upper radius still misses
/// every minus point that lies inside the convex hull.
const MAX_EXPANSIONS: usize = 64;

/// Initial bisection bracket `(r_m0, r_M0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub r_m0: f64,
    pub r_max0: f64,
}

impl Bracket {
    pub fn new(r_m0: f64, r_max0: f64) -> Result<Self> {
        if !(r_m0 > 0.0 && r_m0 < r_max0 && r_max0.is_finite()) {
            return Err(invalid(
                "bracket",
                format!("need 0 < r_m0 < r_M0 < inf, got ({r_m0}, {r_max0})"),
            ));
        }
        Ok(Self { r_m0, r_max0 })
    }

    /// `(1e-3 D, 2 D)` for the data diameter `D` (1 if all points coincide).
    pub fn default_for(points: &[Point]) -> Self {
        let d = BBox::of_points(points).diameter();
        let d = if d > 0.0 { d } else { 1.0 };
        Self {
            r_m0: 1e-3 * d,
            r_max0: 2.0 * d,
        }
    }
}

/// Outcome of the bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    /// Final lower bracket end, or infinity for the convex fallback.
    #[serde(with = "crate::serde_inf")]
    pub r_hat: f64,
    /// Bracket before the first step and after each step.
    pub bracket_trace: Vec<(f64, f64)>,
    pub iterations_used: usize,
    pub convex_fallback: bool,
    /// The upper end was enlarged beyond `r_M0` before bisecting.
    pub bracket_expanded: bool,
}

/// `predicate_hits` over fixed plus and minus sets, sharing the plus
/// triangulation across radii.
#[derive(Debug, Clone)]
pub struct HitPredicate {
    sites: Arc<SiteSet>,
    /// Minus points inside `conv(plus)`; the others are never members.
    candidates: Vec<Point>,
}

impl HitPredicate {
    pub fn new(plus: &[Point], minus: &[Point]) -> Result<Self> {
        if plus.is_empty() {
            return Err(Error::EmptyLevelSet);
        }
        let sites = Arc::new(SiteSet::from_points(plus)?);
        let candidates = minus
            .iter()
            .copied()
            .filter(|&m| sites.hull().contains(m, sites.eps()))
            .collect();
        Ok(Self { sites, candidates })
    }

    /// True when some minus point lies in `conv(plus)`.
    pub fn hits_convex(&self) -> bool {
        !self.candidates.is_empty()
    }

    /// True when some minus point is a member of `C_r(plus)`.
    pub fn hits(&self, r: f64) -> Result<bool> {
        if self.candidates.is_empty() {
            return Ok(false);
        }
        let region = RConvexRegion::with_sites(self.sites.clone(), r)?;
        Ok(self.candidates.par_iter().any(|&m| region.contains(m)))
    }

    pub fn site_set(&self) -> &Arc<SiteSet> {
        &self.sites
    }
}

/// True iff some minus point belongs to `C_r(plus)`.
pub fn predicate_hits(plus: &[Point], minus: &[Point], r: f64) -> Result<bool> {
    HitPredicate::new(plus, minus)?.hits(r)
}

pub fn estimate_r0(plus: &[Point], minus: &[Point], bracket: Bracket, j: usize) -> Result<RadiusEstimate> {
    estimate_with(&HitPredicate::new(plus, minus)?, bracket, j)
}

/// `J` bisection steps on the monotone predicate. Returns the convex
/// fallback when no minus point lies in the convex hull of plus, or when
/// the predicate stays false while the upper end is doubled up to 64
/// times (capped at `1e6` times the plus diameter).
pub fn estimate_with(pred: &HitPredicate, bracket: Bracket, j: usize) -> Result<RadiusEstimate> {
    let Bracket { r_m0, r_max0 } = Bracket::new(bracket.r_m0, bracket.r_max0)?;
    if j == 0 {
        return Err(invalid("J", "need at least one bisection step"));
    }
    let fallback = |expanded| RadiusEstimate {
        r_hat: f64::INFINITY,
        bracket_trace: vec![],
        iterations_used: 0,
        convex_fallback: true,
        bracket_expanded: expanded,
    };
    if !pred.hits_convex() {
        return Ok(fallback(false));
    }
    if pred.hits(r_m0)? {
        return Err(Error::InvalidBracket { r_m: r_m0 });
    }
    let (mut lo, mut hi) = (r_m0, r_max0);
    let mut expanded = false;
    if !pred.hits(hi)? {
        let d = pred.sites.bbox().diameter();
        let cap = 1e6 * if d > 0.0 { d } else { 1.0 };
        let mut found = false;
        for _ in 0..MAX_EXPANSIONS {
            if hi > cap {
                break;
            }
            expanded = true;
            lo = hi;
            hi *= 2.0;
            if pred.hits(hi)? {
                found = true;
                break;
            }
        }
        if !found {
            return Ok(fallback(true));
        }
    }
    let mut trace = Vec::with_capacity(j + 1);
    trace.push((lo, hi));
    for _ in 0..j {
        let mid = 0.5 * (lo + hi);
        if pred.hits(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        trace.push((lo, hi));
    }
    Ok(RadiusEstimate {
        r_hat: lo,
        bracket_trace: trace,
        iterations_used: j,
        convex_fallback: false,
        bracket_expanded: expanded,
    })
}

/// `C_{nu * r_hat}(plus)`, or `conv(plus)` when `r_hat` is infinite.
#[derive(Debug, Clone)]
pub struct LevelSetEstimate {
    pub region: RConvexRegion,
    pub radius_estimate: RadiusEstimate,
    pub nu: f64,
    pub split: SplitSample,
    pub singleton_plus: bool,
}

/// Estimates `r_0` from the split's plus and minus points and builds the
/// region over plus. Unassigned points take no part. `bracket` defaults to
/// [`Bracket::default_for`] over the whole split sample.
pub fn estimate_level_set(
    split: &SplitSample,
    nu: f64,
    j: usize,
    bracket: Option<Bracket>,
) -> Result<LevelSetEstimate> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(invalid("nu", format!("must lie in (0, 1], got {nu}")));
    }
    if split.plus().is_empty() {
        return Err(Error::EmptyLevelSet);
    }
    let bracket = bracket.unwrap_or_else(|| {
        let all: Vec<Point> = [split.plus(), split.minus(), split.unassigned()].concat();
        Bracket::default_for(&all)
    });
    let pred = HitPredicate::new(split.plus(), split.minus())?;
    let est = estimate_with(&pred, bracket, j)?;
    let radius = if est.convex_fallback {
        f64::INFINITY
    } else {
        nu * est.r_hat
    };
    let region = RConvexRegion::with_sites(pred.site_set().clone(), radius)?;
    Ok(LevelSetEstimate {
        singleton_plus: region.generators().len() == 1,
        region,
        radius_estimate: est,
        nu,
        split: split.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xy: &[(f64, f64)]) -> Vec<Point> {
        xy.iter().map(|&c| Point::from(c)).collect()
    }

    #[test]
    fn empty_minus_is_convex() {
        let plus = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let est = estimate_r0(&plus, &[], Bracket::new(0.01, 10.0).unwrap(), 10).unwrap();
        assert!(est.convex_fallback && est.r_hat.is_infinite());
        for r in [0.01, 1.0, 1e3] {
            assert!(!predicate_hits(&plus, &[], r).unwrap());
        }
    }

    #[test]
    fn coinciding_minus_always_hits() {
        let plus = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let minus = pts(&[(1.0, 0.0)]);
        for r in [1e-6, 0.5, 1e3] {
            assert!(predicate_hits(&plus, &minus, r).unwrap());
        }
        let err = estimate_r0(&plus, &minus, Bracket::new(0.01, 10.0).unwrap(), 10);
        assert_eq!(err.unwrap_err(), Error::InvalidBracket { r_m: 0.01 });
    }

    #[test]
    fn bracket_validation() {
        assert!(Bracket::new(1.0, 0.5).is_err());
        assert!(Bracket::new(0.0, 0.5).is_err());
        let b = Bracket::default_for(&pts(&[(0.0, 0.0), (3.0, 4.0)]));
        assert!((b.r_m0 - 5e-3).abs() < 1e-15 && (b.r_max0 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn square_with_center_minus() {
        // C_r of the unit square corners contains the center iff r >= 1/sqrt(2)
        let plus = pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let minus = pts(&[(0.5, 0.5)]);
        let est = estimate_r0(&plus, &minus, Bracket::new(0.01, 10.0).unwrap(), 40).unwrap();
        assert!((est.r_hat - 0.5f64.sqrt()).abs() < 1e-8, "{}", est.r_hat);
        assert_eq!(est.bracket_trace.len(), 41);
    }
}

//! Partition of a sample into confident inside points (`X+`), confident
//! outside points (`X-`) and an unassigned remainder, plus the k-nearest
//! neighbour vote that labels the remainder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{KdeModel, ThresholdPair};
use crate::error::{Error, Result, invalid};
use crate::point::{Point, PointCloud};

/// Number of quick bootstrap refits behind [`auto_margin`].
pub const AUTO_MARGIN_REFITS: usize = 30;
const AUTO_MARGIN_PROBES: usize = 500;

/// `D_n = M (log n / n)^(p / (d + 2p))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSchedule {
    pub m: f64,
    pub p: u32,
    pub d: u32,
}

impl MarginSchedule {
    /// Schedule with smoothness order 2 in the plane.
    pub fn new(m: f64) -> Result<Self> {
        Self::with_order(m, 2)
    }

    pub fn with_order(m: f64, p: u32) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid("M", format!("must be positive and finite, got {m}")));
        }
        if p == 0 {
            return Err(invalid("p", "smoothness order must be positive"));
        }
        Ok(Self { m, p, d: 2 })
    }

    /// `(log n / n)^(p / (d + 2p))`, the schedule with `M = 1`.
    pub fn rate(&self, n: usize) -> Result<f64> {
        if n < 2 {
            return Err(invalid("n", format!("margin needs n >= 2, got {n}")));
        }
        let n = n as f64;
        let e = self.p as f64 / (self.d as f64 + 2.0 * self.p as f64);
        Ok((n.ln() / n).powf(e))
    }
}

pub fn dn(sched: &MarginSchedule, n: usize) -> Result<f64> {
    Ok(sched.m * sched.rate(n)?)
}

/// Practical margin constant: `M` such that `D_n` equals the mean pointwise
/// standard deviation of `f_n` over [`AUTO_MARGIN_REFITS`] smoothed-bootstrap
/// resamples (bandwidth held fixed), probed at up to 500 sample points.
pub fn auto_margin(model: &KdeModel, p: u32, seed: u64) -> Result<MarginSchedule> {
    let pts = model.sample().points();
    let n = pts.len();
    let stride = n.div_ceil(AUTO_MARGIN_PROBES);
    let probes: Vec<Point> = pts.iter().step_by(stride).copied().collect();
    let replicas: Vec<Vec<f64>> = (0..AUTO_MARGIN_REFITS)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let star = PointCloud::new(model.draw(&mut rng, n)).expect("draws are finite");
            let refit = KdeModel::new(star, model.bandwidth());
            probes.iter().map(|&x| refit.eval(x)).collect()
        })
        .collect();
    let reps = AUTO_MARGIN_REFITS as f64;
    let mean_sd = (0..probes.len())
        .map(|j| {
            let mean = replicas.iter().map(|r| r[j]).sum::<f64>() / reps;
            let var = replicas.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (reps - 1.0);
            var.sqrt()
        })
        .sum::<f64>()
        / probes.len() as f64;
    let sched = MarginSchedule::with_order(1.0, p)?;
    MarginSchedule::with_order(mean_sd / sched.rate(n)?, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Plus,
    Minus,
    Unassigned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitMode {
    Margin { t: f64, dn: f64 },
    Calibrated,
}

/// Three-way split of a sample. `labels` follows the input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSample {
    plus: Vec<Point>,
    minus: Vec<Point>,
    unassigned: Vec<Point>,
    labels: Vec<Label>,
    t_plus: f64,
    t_minus: f64,
    mode: SplitMode,
    minus_vacuous: bool,
    knn_k: Option<usize>,
}

impl SplitSample {
    /// Splits `points` given their density values: plus iff `v >= t_plus`,
    /// minus iff `v < t_minus`.
    pub fn from_values(
        points: &[Point],
        values: &[f64],
        t_plus: f64,
        t_minus: f64,
        mode: SplitMode,
    ) -> Result<Self> {
        if points.len() != values.len() {
            return Err(invalid("values", "one density value per point is required"));
        }
        if !(t_plus >= t_minus && t_plus.is_finite() && t_minus.is_finite()) {
            return Err(invalid(
                "thresholds",
                format!("need finite t_plus >= t_minus, got ({t_plus}, {t_minus})"),
            ));
        }
        let mut out = Self {
            plus: vec![],
            minus: vec![],
            unassigned: vec![],
            labels: Vec::with_capacity(points.len()),
            t_plus,
            t_minus,
            mode,
            minus_vacuous: t_minus <= 0.0,
            knn_k: None,
        };
        for (&p, &v) in points.iter().zip(values) {
            let label = if v >= t_plus {
                out.plus.push(p);
                Label::Plus
            } else if v < t_minus {
                out.minus.push(p);
                Label::Minus
            } else {
                out.unassigned.push(p);
                Label::Unassigned
            };
            out.labels.push(label);
        }
        Ok(out)
    }

    pub fn plus(&self) -> &[Point] {
        &self.plus
    }

    pub fn minus(&self) -> &[Point] {
        &self.minus
    }

    pub fn unassigned(&self) -> &[Point] {
        &self.unassigned
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn t_plus(&self) -> f64 {
        self.t_plus
    }

    pub fn t_minus(&self) -> f64 {
        self.t_minus
    }

    pub fn mode(&self) -> SplitMode {
        self.mode
    }

    /// The minus threshold is not positive, so no point can be minus.
    pub fn minus_vacuous(&self) -> bool {
        self.minus_vacuous
    }

    /// `k` used to label the remainder, if it has been labelled.
    pub fn knn_k(&self) -> Option<usize> {
        self.knn_k
    }

    /// Labels the unassigned points by a `k`-nearest-neighbour vote over
    /// plus and minus and merges them in. With one class empty, the whole
    /// remainder joins the other class.
    pub fn classify_remainder(&self, k: usize) -> Result<Self> {
        check_k(k)?;
        let votes = if self.unassigned.is_empty() {
            vec![]
        } else if self.minus.is_empty() {
            vec![true; self.unassigned.len()]
        } else if self.plus.is_empty() {
            vec![false; self.unassigned.len()]
        } else {
            knn_labels(&self.plus, &self.minus, k, &self.unassigned)?
        };
        let mut out = self.clone();
        out.unassigned.clear();
        out.knn_k = Some(k);
        let mut vote = votes.iter();
        let mut pts = self.unassigned.iter();
        for label in out.labels.iter_mut() {
            if *label == Label::Unassigned {
                let p = *pts.next().expect("one point per unassigned label");
                if *vote.next().expect("one vote per point") {
                    out.plus.push(p);
                    *label = Label::Plus;
                } else {
                    out.minus.push(p);
                    *label = Label::Minus;
                }
            }
        }
        Ok(out)
    }
}

/// Split by `f_n >= t + D_n` / `f_n < t - D_n`.
pub fn split_margin(model: &KdeModel, sample: &PointCloud, t: f64, dn: f64) -> Result<SplitSample> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("threshold must be positive, got {t}")));
    }
    if !(dn >= 0.0 && dn.is_finite()) {
        return Err(invalid("Dn", format!("margin must be non-negative, got {dn}")));
    }
    let values = model.eval_many(sample.points());
    SplitSample::from_values(sample.points(), &values, t + dn, t - dn, SplitMode::Margin { t, dn })
}

/// Split by `f_n >= f_plus` / `f_n < f_minus`.
pub fn split_calibrated(
    model: &KdeModel,
    sample: &PointCloud,
    thresholds: ThresholdPair,
) -> Result<SplitSample> {
    let values = model.eval_many(sample.points());
    SplitSample::from_values(
        sample.points(),
        &values,
        thresholds.f_plus,
        thresholds.f_minus,
        SplitMode::Calibrated,
    )
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        return Err(invalid("k", format!("must be odd and positive, got {k}")));
    }
    Ok(())
}

/// Majority vote among the `k` nearest labelled points; `true` means plus.
/// Distance ties go to plus, then to the lower index within a class.
pub fn knn_labels(plus: &[Point], minus: &[Point], k: usize, queries: &[Point]) -> Result<Vec<bool>> {
    check_k(k)?;
    if plus.is_empty() || minus.is_empty() {
        return Err(Error::EmptyInput("kNN needs both plus and minus training points"));
    }
    if k > plus.len() + minus.len() {
        return Err(invalid(
            "k",
            format!("k = {k} exceeds the {} training points", plus.len() + minus.len()),
        ));
    }
    Ok(queries
        .par_iter()
        .map(|&q| {
            // (squared distance, class with plus first, index), kept sorted
            let mut best: Vec<(f64, u8, usize)> = Vec::with_capacity(k + 1);
            let classes = [(0u8, plus), (1u8, minus)];
            for (class, pts) in classes {
                for (i, p) in pts.iter().enumerate() {
                    let key = (q.dist2(*p), class, i);
                    if best.len() == k && !less(key, best[k - 1]) {
                        continue;
                    }
                    let at = best.partition_point(|&b| less(b, key));
                    best.insert(at, key);
                    best.truncate(k);
                }
            }
            let plus_votes = best.iter().filter(|b| b.1 == 0).count();
            2 * plus_votes > k
        })
        .collect())
}

fn less(a: (f64, u8, usize), b: (f64, u8, usize)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).is_lt()
}

/// Queries split into those voted plus and those voted minus.
pub fn knn_classify(
    plus: &[Point],
    minus: &[Point],
    k: usize,
    queries: &[Point],
) -> Result<(Vec<Point>, Vec<Point>)> {
    let votes = knn_labels(plus, minus, k, queries)?;
    let (a, b): (Vec<_>, Vec<_>) = queries.iter().zip(votes).partition(|(_, v)| *v);
    Ok((a.into_iter().map(|x| *x.0).collect(), b.into_iter().map(|x| *x.0).collect()))
}

use levelset::geometry::RasterMask;
use levelset::synthref::{
    ConvergenceConfig, Disc, Level, SyntheticDensity, gamma_grid, r0_grid_oracle, run_convergence, true_level_mask,
};
use levelset::{Error, Point};

fn preset(name: &str) -> SyntheticDensity {
    SyntheticDensity::preset(name).unwrap()
}

fn mask_mass(d: &SyntheticDensity, mask: &RasterMask) -> f64 {
    let r = mask.resolution;
    let mut total = 0.0;
    for iy in 0..r {
        for ix in 0..r {
            if mask.get(ix, iy) {
                total += d.density(mask.cell_center(ix, iy));
            }
        }
    }
    total * mask.cell_area()
}

#[test]
fn disc_sampler_is_uniform() {
    let d = preset("two-discs");
    let n = 32_000;
    let s = d.sample(n, 1);
    // 2 discs x 8 angular sectors, equiprobable
    let mut counts = [0usize; 16];
    for p in s.points() {
        let c = Point::new(p.x.signum(), 0.0);
        let v = *p - c;
        assert!(v.norm() <= 0.5 + 1e-12);
        let sector = (((v.y.atan2(v.x) + std::f64::consts::PI) / (std::f64::consts::PI / 4.0)) as usize).min(7);
        counts[sector + if p.x > 0.0 { 8 } else { 0 }] += 1;
    }
    let e = n as f64 / 16.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 99.9% point of chi-square with 15 degrees of freedom
    assert!(chi2 < 37.7, "{chi2}");
    // a quarter of a disc's area lies within half its radius
    let big = d.sample(100_000, 2);
    let inner = big.points().iter().filter(|p| (**p - Point::new(p.x.signum(), 0.0)).norm() < 0.25).count();
    assert!((inner as f64 / 1e5 - 0.25).abs() <= 0.005, "{inner}");
}

#[test]
fn mixture_sampler_moments() {
    let d = preset("bimodal");
    let s = d.sample(50_000, 3);
    let n = s.len() as f64;
    let mx = s.points().iter().map(|p| p.x).sum::<f64>() / n;
    let my = s.points().iter().map(|p| p.y).sum::<f64>() / n;
    let sxx = s.points().iter().map(|p| p.x * p.x).sum::<f64>() / n;
    let syy = s.points().iter().map(|p| p.y * p.y).sum::<f64>() / n;
    assert!(mx.abs() < 0.03 && my.abs() < 0.03, "{mx} {my}");
    assert!((sxx - 3.25).abs() < 0.08, "{sxx}");
    assert!((syy - 1.0).abs() < 0.04, "{syy}");
}

#[test]
fn annulus_sampler_stays_in_the_ring() {
    let d = preset("annulus");
    let s = d.sample(5000, 4);
    assert!(s.points().iter().all(|p| (0.5..=1.0).contains(&p.norm())));
    assert_eq!(s, d.sample(5000, 4));
}

#[test]
fn content_mask_holds_the_requested_mass() {
    let d = preset("bimodal");
    for tau in [0.3, 0.5, 0.8] {
        let truth = true_level_mask(&d, Level::Content(tau), d.truth_bbox(), 512).unwrap();
        let mass = mask_mass(&d, &truth.mask);
        assert!((mass - (1.0 - tau)).abs() <= 1e-3, "tau {tau}: {mass}");
    }
    assert!(true_level_mask(&d, Level::Content(1.0), d.truth_bbox(), 64).is_err());
}

#[test]
fn truth_masks_nest_and_split_at_the_saddle() {
    let d = preset("bimodal");
    let bbox = d.truth_bbox();
    // mixture value at the origin, between the two modes
    let saddle = d.density(Point::new(0.0, 0.0));
    let low = true_level_mask(&d, Level::Threshold(0.8 * saddle), bbox, 256).unwrap();
    let high = true_level_mask(&d, Level::Threshold(1.1 * saddle), bbox, 256).unwrap();
    assert!(high.mask.is_subset_of(&low.mask).unwrap());
    assert_eq!(low.mask.connected_components(), 1);
    assert_eq!(high.mask.connected_components(), 2);
    assert!(true_level_mask(&d, Level::Threshold(2.0 * d.peak_density()), bbox, 64).unwrap().mask.is_empty());
}

#[test]
fn oracle_on_a_single_disc_reaches_the_top_of_the_grid() {
    let d = SyntheticDensity::new(SyntheticDensity::UniformDiscs {
        discs: vec![Disc { center: Point::new(0.0, 0.0), radius: 0.5 }],
    })
    .unwrap();
    let truth = true_level_mask(&d, Level::Threshold(0.5 * d.peak_density()), d.truth_bbox(), 256).unwrap();
    let grid = gamma_grid(d.characteristic_length());
    assert_eq!(r0_grid_oracle(&truth.mask, &grid).unwrap(), *grid.last().unwrap());
}

#[test]
fn oracle_on_the_annulus_finds_the_inner_radius() {
    let d = preset("annulus");
    let truth = true_level_mask(&d, Level::Threshold(0.5 * d.peak_density()), d.truth_bbox(), 512).unwrap();
    let r0 = r0_grid_oracle(&truth.mask, &gamma_grid(d.characteristic_length())).unwrap();
    assert!((r0 - 0.5).abs() <= 0.08 * 0.5, "{r0}");
}

#[test]
fn oracle_is_stable_across_resolutions() {
    let d = preset("two-discs");
    let grid = gamma_grid(d.characteristic_length());
    let step = grid[1] / grid[0];
    let at = |res| {
        let truth = true_level_mask(&d, Level::Threshold(0.5 * d.peak_density()), d.truth_bbox(), res).unwrap();
        r0_grid_oracle(&truth.mask, &grid).unwrap()
    };
    let (a, b) = (at(256), at(512));
    assert!(a / b <= step * 1.000001 && b / a <= step * 1.000001, "{a} vs {b}");
    // the discs are half a gap apart: r0 is half the gap width
    assert!((b - 0.5).abs() <= 0.08 * 0.5, "{b}");
}

#[test]
fn oracle_rejects_bad_inputs() {
    let empty = RasterMask::empty(levelset::BBox::new(0.0, 0.0, 1.0, 1.0), 16);
    assert!(matches!(r0_grid_oracle(&empty, &[0.1]), Err(Error::EmptyInput(_))));
    let d = preset("two-discs");
    let truth = true_level_mask(&d, Level::Threshold(0.1), d.truth_bbox(), 64).unwrap();
    assert!(r0_grid_oracle(&truth.mask, &[0.2, 0.1]).is_err());
}

fn smoke_config(density: SyntheticDensity, level: Level, n: usize, reps: usize) -> ConvergenceConfig {
    ConvergenceConfig {
        density,
        level,
        n_grid: vec![n],
        replicates: reps,
        nu: 1.0,
        seed: 17,
        resolution: 128,
        j: 30,
        r0_reference: Some(0.5),
    }
}

#[test]
fn convergence_smoke_report_is_well_formed_and_deterministic() {
    let d = preset("two-discs");
    let cfg = smoke_config(d.clone(), Level::Threshold(0.65 * d.peak_density()), 500, 2);
    let a = run_convergence(&cfg).unwrap();
    assert_eq!(a.rows.len(), 2);
    assert_eq!(a.summaries.len(), 1);
    assert!(a.d_mu_slope.is_none());
    for row in &a.rows {
        assert!(row.failure.is_none(), "{:?}", row.failure);
        assert!(row.n_plus > 0 && row.d_mu >= 0.0 && row.plugin_d_mu >= 0.0);
        assert!(row.rel_error.is_some());
    }
    let b = run_convergence(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let mut bad = cfg.clone();
    bad.n_grid = vec![10];
    assert!(run_convergence(&bad).is_err());
}

#[test]
fn two_disc_estimates_have_two_components() {
    let d = preset("two-discs");
    let mut cfg = smoke_config(d.clone(), Level::Threshold(0.65 * d.peak_density()), 2000, 4);
    cfg.nu = 0.9;
    cfg.resolution = 200;
    let rep = run_convergence(&cfg).unwrap();
    let two = rep.rows.iter().filter(|r| r.components == 2).count();
    assert!(two >= 3, "{:?}", rep.rows.iter().map(|r| r.components).collect::<Vec<_>>());
}

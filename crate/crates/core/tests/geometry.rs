use levelset::geometry::{
    ConvexPolygon, RConvexRegion, RasterMask, Triangulation, brute_force_contains, convex_hull,
};
use levelset::{BBox, Error, Point, PointCloud};
use proptest::prelude::*;

fn cloud_strategy(min: usize, max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), min..=max)
        .prop_map(|xy| PointCloud::from_xy(&xy).unwrap())
}

fn query_strategy() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-0.2f64..1.2, -0.2f64..1.2), 30)
        .prop_map(|v| v.into_iter().map(Point::from).collect())
}

fn sagitta(r: f64, chord: f64) -> f64 {
    r - (r * r - chord * chord / 4.0).max(0.0).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generators_are_members(s in cloud_strategy(1, 60), r in 0.01f64..2.0) {
        let region = RConvexRegion::new(&s, r).unwrap();
        for &p in s.points() {
            prop_assert!(region.contains(p));
        }
    }

    #[test]
    fn membership_is_monotone_in_radius(
        s in cloud_strategy(3, 60),
        r in 0.02f64..1.0,
        factor in 1.0f64..4.0,
        qs in query_strategy(),
    ) {
        let small = RConvexRegion::new(&s, r).unwrap();
        let large = RConvexRegion::new(&s, r * factor).unwrap();
        let hull = RConvexRegion::convex(&s).unwrap();
        for q in qs {
            if small.contains(q) {
                prop_assert!(large.contains(q), "q = {q:?}");
            }
            if large.contains(q) {
                prop_assert!(hull.contains(q), "q = {q:?}");
            }
        }
    }

    #[test]
    fn large_radius_matches_convex_hull(s in cloud_strategy(3, 60), qs in query_strategy()) {
        let diameter = s.bbox().diameter();
        let r = 10.0 * diameter;
        let region = RConvexRegion::new(&s, r).unwrap();
        let poly = ConvexPolygon::of_points(s.points());
        let v = poly.vertices();
        let band = (0..v.len())
            .map(|i| sagitta(r, v[i].dist(v[(i + 1) % v.len()])))
            .fold(0.0, f64::max)
            + region.eps();
        for q in qs {
            if poly.boundary_distance(q) > band {
                prop_assert_eq!(region.contains(q), poly.contains(q, 0.0), "q = {:?}", q);
            }
        }
    }

    #[test]
    fn exact_membership_matches_lattice_oracle(
        s in cloud_strategy(3, 50),
        r in prop::sample::select(vec![0.1, 0.5, 1.0]),
        qs in query_strategy(),
    ) {
        let region = RConvexRegion::new(&s, r).unwrap();
        let tol = 2.0 * r / 200.0;
        for q in qs {
            let exact = region.contains(q);
            let brute = brute_force_contains(&region, q, 200).unwrap();
            if exact != brute {
                prop_assert!(region.near_boundary(q, tol, 41), "q = {q:?}, exact = {exact}");
            }
        }
    }

    #[test]
    fn boundary_rings_close_and_match_membership(s in cloud_strategy(3, 40), r in 0.05f64..1.5) {
        let region = RConvexRegion::new(&s, r).unwrap();
        prop_assume!(!region.is_degenerate());
        let b = region.boundary().unwrap();
        let eps = region.eps();
        for ring in &b.rings {
            prop_assert!(ring.is_closed(1e3 * eps));
            prop_assert!(ring.signed_area() >= -1e-9 || ring.elements.len() > 1);
        }
        let bbox = region.default_bbox(0.05);
        let res = 96;
        let cell = bbox.width().max(bbox.height()) / res as f64;
        let chord_tol = 1e-3 * cell;
        let exact = region.rasterize(bbox, res);
        let traced = RasterMask::from_predicate(bbox, res, |p| b.contains_flattened(p, chord_tol));
        for iy in 0..res {
            for ix in 0..res {
                if exact.get(ix, iy) != traced.get(ix, iy) {
                    let c = exact.cell_center(ix, iy);
                    prop_assert!(region.near_boundary(c, 1.5 * cell, 9), "cell {ix},{iy}");
                }
            }
        }
        let area_tol = 4.0 * cell * (exact.count() as f64).sqrt() * cell + 1e-9;
        prop_assert!((b.area() - exact.area()).abs() <= area_tol.max(50.0 * cell * cell));
    }

    #[test]
    fn closing_identity_at_raster_level(s in cloud_strategy(5, 30), r in 0.08f64..0.5) {
        let region = RConvexRegion::new(&s, r).unwrap();
        let bbox = BBox::new(-0.1 - r, -0.1 - r, 1.1 + r, 1.1 + r);
        let res = 128;
        let exact = region.rasterize(bbox, res);
        let mut seeds = RasterMask::empty(bbox, res);
        for &p in s.points() {
            let (ix, iy) = seeds.cell_of(p).unwrap();
            seeds.set(ix, iy, true);
        }
        let cell = seeds.cell_size();
        let closed = seeds.dilate(cell).closing(r);
        // sandwich: C_r(S) within closing_r(S + delta), which in turn avoids
        // every r-ball whose center is at least r + delta from S
        let delta = 2.0 * cell;
        let band = 2.0 * cell * std::f64::consts::SQRT_2;
        let far = RasterMask::from_predicate(bbox, res, |c| {
            s.points().iter().all(|p| p.dist(c) >= r + delta)
        });
        let upper = far.dilate(r - band).complement();
        prop_assert!(closed.is_subset_of(&upper).unwrap());
        for iy in 0..res {
            for ix in 0..res {
                if exact.get(ix, iy) && !closed.get(ix, iy) {
                    let c = exact.cell_center(ix, iy);
                    prop_assert!(region.near_boundary(c, band, 9), "cell {ix},{iy}");
                }
            }
        }
    }

    #[test]
    fn raster_metrics_are_metrics(
        a in prop::collection::vec(any::<bool>(), 256),
        b in prop::collection::vec(any::<bool>(), 256),
        c in prop::collection::vec(any::<bool>(), 256),
    ) {
        let bbox = BBox::new(0.0, 0.0, 1.0, 1.0);
        let mk = |bits: Vec<bool>| RasterMask { bbox, resolution: 16, bits };
        let (a, b, c) = (mk(a), mk(b), mk(c));
        let dm = |x: &RasterMask, y: &RasterMask| x.measure_distance(y).unwrap();
        prop_assert_eq!(dm(&a, &b), dm(&b, &a));
        prop_assert_eq!(dm(&a, &a), 0.0);
        prop_assert!(dm(&a, &c) <= dm(&a, &b) + dm(&b, &c) + 1e-12);
        prop_assert_eq!(dm(&a, &b) == 0.0, a == b);
        if !a.is_empty() && !b.is_empty() && !c.is_empty() {
            let dh = |x: &RasterMask, y: &RasterMask| x.hausdorff(y).unwrap();
            prop_assert_eq!(dh(&a, &b), dh(&b, &a));
            prop_assert_eq!(dh(&a, &a), 0.0);
            prop_assert_eq!(dh(&a, &b) == 0.0, a == b);
            prop_assert!(dh(&a, &c) <= dh(&a, &b) + dh(&b, &c) + 1e-12);
        }
    }
}

#[test]
fn delaunay_edges_contain_nearest_neighbour_graph() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let pts: Vec<Point> = (0..50)
        .map(|_| Point::new(rng.random(), rng.random()))
        .collect();
    let t = Triangulation::new(&pts).unwrap();
    for i in 0..pts.len() {
        let j = (0..pts.len())
            .filter(|&j| j != i)
            .min_by(|&a, &b| pts[i].dist2(pts[a]).total_cmp(&pts[i].dist2(pts[b])))
            .unwrap();
        assert!(t.edges().contains(&(i.min(j), i.max(j))));
    }
}

#[test]
fn convex_hull_examples() {
    let square =
        PointCloud::from_xy(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)]).unwrap();
    let b = convex_hull(&square);
    assert_eq!(b.rings.len(), 1);
    assert_eq!(b.rings[0].elements.len(), 4);
    assert!((b.area() - 1.0).abs() < 1e-15);

    let single = convex_hull(&PointCloud::from_xy(&[(3.0, 4.0)]).unwrap());
    assert!(single.rings[0].is_point());
    assert_eq!(single.area(), 0.0);

    let circle: Vec<(f64, f64)> = (0..100)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 100.0;
            (a.cos(), a.sin())
        })
        .collect();
    let b = convex_hull(&PointCloud::from_xy(&circle).unwrap());
    assert_eq!(b.rings[0].elements.len(), 100);
    assert!(b.rings[0].signed_area() > 0.0);
}

#[test]
fn lattice_oracle_examples() {
    let generators = PointCloud::from_xy(&[(0.0, 0.0), (1.0, 0.2), (0.4, 0.9)]).unwrap();
    let region = RConvexRegion::new(&generators, 0.7).unwrap();
    for &p in generators.points() {
        assert!(brute_force_contains(&region, p, 200).unwrap());
    }
    let pair = RConvexRegion::new(&PointCloud::from_xy(&[(0.0, 0.0), (2.0, 0.0)]).unwrap(), 0.5)
        .unwrap();
    assert!(!brute_force_contains(&pair, Point::new(1.0, 0.0), 200).unwrap());
    assert!(brute_force_contains(&RConvexRegion::convex(&generators).unwrap(), Point::new(0.0, 0.0), 10).is_err());
}

#[test]
fn lattice_oracle_refinement_only_moves_boundary_queries() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let pts: Vec<(f64, f64)> = (0..40).map(|_| (rng.random(), rng.random())).collect();
    let region = RConvexRegion::new(&PointCloud::from_xy(&pts).unwrap(), 0.3).unwrap();
    for _ in 0..300 {
        let q = Point::new(rng.random_range(-0.1..1.1), rng.random_range(-0.1..1.1));
        let coarse = brute_force_contains(&region, q, 50).unwrap();
        let fine = brute_force_contains(&region, q, 100).unwrap();
        if coarse != fine {
            assert!(region.near_boundary(q, 4.0 * 0.3 / 50.0, 21), "q = {q:?}");
        }
    }
}

#[test]
fn lattice_oracle_matches_convex_hull_for_huge_radius() {
    let pts = [(0.1, 0.1), (0.9, 0.2), (0.8, 0.9), (0.2, 0.7), (0.5, 0.5)];
    let cloud = PointCloud::from_xy(&pts).unwrap();
    let region = RConvexRegion::new(&cloud, 5.0).unwrap();
    let poly = ConvexPolygon::of_points(cloud.points());
    for (x, y) in [(0.5, 0.3), (0.3, 0.6), (1.2, 0.5), (-0.2, -0.2), (0.7, 0.6)] {
        let q = Point::new(x, y);
        assert_eq!(brute_force_contains(&region, q, 200).unwrap(), poly.contains(q, 0.0));
    }
}

#[test]
fn square_corners_boundary_area_approaches_one() {
    let corners = PointCloud::from_xy(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).unwrap();
    let b10 = RConvexRegion::new(&corners, 10.0).unwrap().boundary().unwrap();
    let b1000 = RConvexRegion::new(&corners, 1000.0).unwrap().boundary().unwrap();
    assert_eq!(b10.rings.len(), 1);
    assert_eq!(b10.rings[0].elements.len(), 4);
    assert!(b10.area() < b1000.area());
    assert!((b1000.area() - 1.0).abs() < 1e-3);
}

#[test]
fn annulus_sample_has_inner_and_outer_rings() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut pts = Vec::new();
    while pts.len() < 600 {
        let (x, y): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let d = x.hypot(y);
        if (0.5..=1.0).contains(&d) {
            pts.push((x, y));
        }
    }
    let region = RConvexRegion::new(&PointCloud::from_xy(&pts).unwrap(), 0.2).unwrap();
    let b = region.boundary().unwrap();
    let rings: Vec<_> = b.rings.iter().filter(|r| !r.is_point()).collect();
    assert_eq!(rings.len(), 2);
    assert_eq!(rings.iter().filter(|r| r.signed_area() > 0.0).count(), 1);
    let mask = region.rasterize(region.default_bbox(0.1), 256);
    assert_eq!(mask.connected_components(), 1);
    assert_eq!(mask.complement().connected_components(), 2);
}

#[test]
fn rasterize_examples() {
    let bbox = BBox::new(0.0, 0.0, 1.0, 1.0);
    // singleton hull is the point itself: exactly the cell whose center it is
    let p = PointCloud::from_xy(&[(0.5 + 0.5 / 256.0, 0.5 + 0.5 / 256.0)]).unwrap();
    let mask = RConvexRegion::new(&p, 0.5).unwrap().rasterize(bbox, 256);
    assert_eq!(mask.count(), 1);

    let corners = PointCloud::from_xy(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).unwrap();
    let full = RConvexRegion::convex(&corners).unwrap().rasterize(bbox, 64);
    assert_eq!(full.count(), 64 * 64);

    let disc: Vec<(f64, f64)> = (0..400)
        .map(|k| {
            let a = k as f64 * 2.399963;
            let rad = 0.4 * ((k as f64 + 0.5) / 400.0).sqrt();
            (0.5 + rad * a.cos(), 0.5 + rad * a.sin())
        })
        .collect();
    let region = RConvexRegion::new(&PointCloud::from_xy(&disc).unwrap(), 0.3).unwrap();
    let a1 = region.rasterize(bbox, 128).area();
    let a2 = region.rasterize(bbox, 256).area();
    assert!((a1 - a2).abs() / a2 < 0.02);
}

#[test]
fn set_distance_examples() {
    let bbox = BBox::new(-1.0, -1.0, 5.0, 5.0);
    let res = 300;
    let cell_diag = (6.0f64 / res as f64) * std::f64::consts::SQRT_2;
    let sq = |x0: f64| {
        RasterMask::from_predicate(bbox, res, move |p| {
            (x0..x0 + 1.0).contains(&p.x) && (0.0..1.0).contains(&p.y)
        })
    };
    let (a, b) = (sq(0.0), sq(3.0));
    assert_eq!(a.hausdorff(&a).unwrap(), 0.0);
    assert!((a.hausdorff(&b).unwrap() - 3.0).abs() <= cell_diag);
    assert!((a.measure_distance(&b).unwrap() - 2.0).abs() < 0.05);
    let big = RasterMask::from_predicate(bbox, res, |p| {
        (0.0..2.0).contains(&p.x) && (0.0..1.0).contains(&p.y)
    });
    let diff = big.area() - a.area();
    assert!((a.measure_distance(&big).unwrap() - diff).abs() < 1e-12);

    let disk = RasterMask::from_predicate(bbox, res, |p| p.dist(Point::new(2.0, 2.0)) <= 1.0);
    let grown = disk.dilate(0.5);
    assert!((disk.hausdorff(&grown).unwrap() - 0.5).abs() <= cell_diag);
    assert_eq!(disk.dilate(0.0), disk);
    assert_eq!(disk.erode(0.0), disk);
    let closed = disk.closing(0.7);
    let xor = closed.measure_distance(&disk).unwrap() / disk.cell_area();
    assert!(xor <= 2.0 * std::f64::consts::PI * 1.0 / (6.0 / res as f64));

    let other = RasterMask::empty(BBox::new(0.0, 0.0, 1.0, 1.0), res);
    assert_eq!(a.measure_distance(&other), Err(Error::GridMismatch));
}

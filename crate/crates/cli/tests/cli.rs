use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use levelset::synthref::SyntheticDensity;
use levelset_cli::report::{Report, format_report};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levelset"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_sample(dir: &Path, name: &str, density: &str, n: usize, seed: u64) -> PathBuf {
    let d = SyntheticDensity::preset(density).unwrap();
    let mut body = String::from("x,y\n");
    for p in d.sample(n, seed).points() {
        body.push_str(&format!("{},{}\n", p.x, p.y));
    }
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Polygons are closed and no two non-adjacent edges of a ring cross.
fn check_geojson(geo: &Value) -> usize {
    assert_eq!(geo["type"], "FeatureCollection");
    let mut rings = 0;
    for f in geo["features"].as_array().unwrap() {
        assert_eq!(f["type"], "Feature");
        if f["geometry"]["type"] != "Polygon" {
            continue;
        }
        for ring in f["geometry"]["coordinates"].as_array().unwrap() {
            rings += 1;
            let pts: Vec<[f64; 2]> = ring
                .as_array()
                .unwrap()
                .iter()
                .map(|c| [c[0].as_f64().unwrap(), c[1].as_f64().unwrap()])
                .collect();
            assert!(pts.len() >= 4);
            assert_eq!(pts.first(), pts.last(), "ring not closed");
            let m = pts.len() - 1;
            for i in 0..m {
                for j in i + 2..m {
                    if i == 0 && j == m - 1 {
                        continue;
                    }
                    assert!(!segments_cross(pts[i], pts[i + 1], pts[j], pts[j + 1]), "self-intersection");
                }
            }
        }
    }
    rings
}

#[test]
fn margin_estimate_writes_all_artifacts_with_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_sample(dir.path(), "discs.csv", "two-discs", 1200, 5);
    let out = dir.path().join("out");
    let t = format!("{}", 0.65 * 2.0 / std::f64::consts::PI);
    let o = run(&[
        "estimate",
        csv.to_str().unwrap(),
        "--t",
        &t,
        "--truth-density",
        "two-discs",
        "--resolution",
        "256",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = Report::load(&out.join("report.json")).unwrap();
    assert_eq!(report.input.n, 1200);
    assert_eq!(report.thresholds.mode, "margin");
    let m = report.metrics.as_ref().expect("metrics with a truth density");
    assert!(m.d_mu >= 0.0 && m.d_h.is_some());
    assert!(report.timings.is_none());
    let svg = std::fs::read_to_string(out.join("figure.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 1200);
    assert!(check_geojson(&read_json(&out.join("region.geojson"))) >= 1);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("d_mu") && table.contains("r0_hat"));
}

#[test]
fn fixed_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_sample(dir.path(), "bimodal.csv", "bimodal", 120, 6);
    let out = dir.path().join("out");
    let args = [
        "estimate",
        csv.to_str().unwrap(),
        "--tau",
        "0.5",
        "--B",
        "2",
        "--I",
        "2",
        "--M",
        "300",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ];
    let mut bytes = vec![];
    for _ in 0..2 {
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        bytes.push(
            ["report.json", "region.geojson", "figure.svg"]
                .map(|f| std::fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(bytes[0], bytes[1]);
    // calibrated reports carry the (k, tau+, tau-) row
    let o = run(&["report", out.join("report.json").to_str().unwrap()]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("k, tau+, tau-") && table.contains("bandwidth") && table.contains("radius"));
    assert!(!table.contains("d_mu"));
}

#[test]
fn annulus_estimate_has_an_inner_ring() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_sample(dir.path(), "ring.csv", "annulus", 3000, 7);
    let out = dir.path().join("out");
    let peak = 1.0 / (std::f64::consts::PI * 0.75);
    let o = run(&[
        "estimate",
        csv.to_str().unwrap(),
        "--t",
        &format!("{}", 0.6 * peak),
        "--resolution",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = Report::load(&out.join("report.json")).unwrap();
    assert!(!report.region.convex);
    assert!(report.region.holes >= 1, "{:?}", report.region);
    assert!(check_geojson(&read_json(&out.join("region.geojson"))) >= 2);
}

#[test]
fn labelled_input_selects_a_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = SyntheticDensity::preset("bimodal").unwrap();
    let mut body = String::new();
    for (i, p) in d.sample(150, 8).points().iter().enumerate() {
        body.push_str(&format!("{},{},{}\n", p.x, p.y, if i % 3 == 0 { "control" } else { "case" }));
    }
    let csv = dir.path().join("lab.csv");
    std::fs::write(&csv, body).unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "estimate",
        csv.to_str().unwrap(),
        "--class",
        "case",
        "--tau",
        "0.5",
        "--no-calibrate",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = Report::load(&out.join("report.json")).unwrap();
    assert_eq!(report.input.n, 100);
    assert_eq!(report.thresholds.mode, "margin");
}

#[test]
fn config_file_is_merged_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_sample(dir.path(), "b.csv", "bimodal", 100, 9);
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"input": "{}", "tau": 0.5, "no_calibrate": true, "margin_m": 0.0, "out": "{}", "bracket": [0.001, 5.0]}}"#,
            csv.display(),
            out.display()
        ),
    )
    .unwrap();
    let o = run(&["estimate", "--config", cfg.to_str().unwrap(), "--nu", "0.9", "--timings"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = Report::load(&out.join("report.json")).unwrap();
    assert_eq!(report.nu, 0.9);
    assert_eq!(report.thresholds.dn, Some(0.0));
    assert_eq!(report.split.n_unassigned, 0);
    assert!(report.timings.is_some());
    assert!(format_report(&report).contains("time bandwidth"));

    std::fs::write(&cfg, r#"{"tau": 0.5, "tua": 1}"#).unwrap();
    let o = run(&["estimate", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("tua"));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "x,y\n0,0\n1,1\n2,oops\n").unwrap();
    let o = run(&["estimate", csv.to_str().unwrap(), "--tau", "0.5"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(err.contains("hint:"), "{err}");

    let o = run(&["estimate", csv.to_str().unwrap()]);
    assert!(!o.status.success());

    let report = dir.path().join("r.json");
    std::fs::write(&report, r#"{"schema_version": 99}"#).unwrap();
    let o = run(&["report", report.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema version 99"));

    let o = bin()
        .env("LEVELSET_THREADS", "zero")
        .args(["report", report.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&o.stderr).contains("LEVELSET_THREADS"));
}

#[test]
fn simulate_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = bin()
        .env("LEVELSET_THREADS", "1")
        .args([
            "simulate",
            "--density",
            "two-discs",
            "--n",
            "500,1000",
            "--reps",
            "2",
            "--resolution",
            "128",
            "--oracle-resolution",
            "256",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sim = read_json(&out.join("simulate.json"));
    assert_eq!(sim["experiment"]["rows"].as_array().unwrap().len(), 4);
    assert!(sim["r0_oracle"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(out.join("replicates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(String::from_utf8_lossy(&o.stdout).contains("d_mu slope"));

    let o = run(&["simulate", "--density", "three-discs", "--reps", "1"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("two-discs") && err.contains("annulus") && err.contains("bimodal"), "{err}");
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array3;
use num_complex::Complex64;
use tempfile::TempDir;
use tomosar_cli::formats::{read_byte_raster, read_float_raster, read_stack, stack_file_len, write_stack};
use tomosar_core::model::{AcquisitionGeometry, ElevationGrid};
use tomosar_core::simulate::InsarStack;

fn tomosar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tomosar"))
        .args(args)
        .current_dir(dir)
        .env_remove("TOMOSAR_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_config(dir: &Path, name: &str, snr: Option<f64>) {
    let noise = match snr {
        Some(s) => format!(r#""noise": {{"snr_db": {s}, "seed": 3}},"#),
        None => String::new(),
    };
    let text = format!(
        r#"{{
  "scene": {{"width": 24, "height": 20, "rectangles": [
    {{"origin_row": 4, "origin_col": 5, "rows": 12, "cols": 10, "height": 30.0}}
  ]}},
  "geometry": {{"n": 12}},
  {noise}
  "nonlocal": {{"patch_radius": 1, "search_radius": 4}},
  "eval": {{"erosion": 1}}
}}"#
    );
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn simulate_default_scene_has_documented_size() {
    let dir = TempDir::new().unwrap();
    ok(&tomosar(dir.path(), &["simulate", "--out", "scene.tstk"]));
    let len = fs::metadata(dir.path().join("scene.tstk")).unwrap().len() as usize;
    assert_eq!(len, stack_file_len(29, 200, 170));
    assert_eq!(len, 7_888_276);
    let truth = read_float_raster(&dir.path().join("scene.truth.hgtf")).unwrap();
    assert_eq!(truth.dim(), (200, 170));
    assert_eq!(truth[[30, 30]], 30.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("scene.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["config"]["geometry"]["n"], 29);
}

#[test]
fn empty_noiseless_scene_is_all_ones() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"scene": {"width": 5, "height": 4, "rectangles": []}, "geometry": {"n": 6}}"#,
    )
    .unwrap();
    ok(&tomosar(dir.path(), &["simulate", "--config", "c.json", "--out", "s.tstk"]));
    let stack = read_stack(&dir.path().join("s.tstk")).unwrap();
    assert_eq!(stack.images.dim(), (6, 4, 5));
    assert!(stack.images.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    let out = tomosar(dir.path(), &["simulate", "--config", "bad.json", "--out", "s.tstk"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("s.tstk").exists());

    fs::write(dir.path().join("unknown.json"), r#"{"nonlocal": {"radius": 2}}"#).unwrap();
    let out = tomosar(dir.path(), &["simulate", "--config", "unknown.json", "--out", "s.tstk"]);
    assert_eq!(out.status.code(), Some(2));

    let out = tomosar(dir.path(), &["filter", "--input", "missing.tstk", "--out", "f.tstk"]);
    assert_eq!(out.status.code(), Some(2));

    let out = tomosar(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = tomosar(dir.path(), &["crlb", "--sigma-b", "100", "--n", "29", "--snr-db", "10", "--kappa", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tomosar(dir.path(), &["crlb", "--n", "29"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tomosar(dir.path(), &["--threads", "0", "crlb", "--sigma-b", "1", "--n", "2", "--snr-db", "0", "--kappa", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_raster_magic_exits_2_and_truncation_exits_3() {
    let dir = TempDir::new().unwrap();
    small_config(dir.path(), "c.json", None);
    ok(&tomosar(dir.path(), &["simulate", "--config", "c.json", "--out", "s.tstk"]));
    let truth = dir.path().join("s.truth.hgtf");
    let mut bytes = fs::read(&truth).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    fs::write(dir.path().join("bad.hgtf"), &bytes).unwrap();
    let args = ["evaluate", "--config", "c.json", "--truth", "s.truth.hgtf", "--out", "e.csv"];
    let out = tomosar(dir.path(), &[&args[..], &["--height", "bad.hgtf"]].concat());
    assert_eq!(out.status.code(), Some(2));

    let good = fs::read(&truth).unwrap();
    fs::write(dir.path().join("short.hgtf"), &good[..good.len() - 4]).unwrap();
    let out = tomosar(dir.path(), &[&args[..], &["--height", "short.hgtf"]].concat());
    assert_eq!(out.status.code(), Some(3));

    let stack = fs::read(dir.path().join("s.tstk")).unwrap();
    fs::write(dir.path().join("short.tstk"), &stack[..stack.len() - 8]).unwrap();
    let out = tomosar(dir.path(), &["filter", "--input", "short.tstk", "--out", "f.tstk"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn filter_is_identity_on_constant_noiseless_stack() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"scene": {"width": 16, "height": 14, "rectangles": []}, "geometry": {"n": 5}}"#,
    )
    .unwrap();
    ok(&tomosar(dir.path(), &["simulate", "--config", "c.json", "--out", "s.tstk"]));
    ok(&tomosar(dir.path(), &["filter", "--input", "s.tstk", "--out", "f.tstk", "--patch-radius", "1", "--search-radius", "3"]));
    assert_eq!(fs::read(dir.path().join("s.tstk")).unwrap(), fs::read(dir.path().join("f.tstk")).unwrap());
    let enl = read_float_raster(&dir.path().join("f.enl.hgtf")).unwrap();
    assert_eq!(enl[[7, 8]], 49.0);
}

#[test]
fn tiles_and_threads_never_change_output_bytes() {
    let root = TempDir::new().unwrap();
    let mut runs = Vec::new();
    for (name, extra) in [
        ("whole", vec![]),
        ("tiled", vec!["--tiles", "7", "--threads", "3"]),
        ("tiny", vec!["--tiles", "1", "--threads", "1"]),
    ] {
        let dir = root.path().join(name);
        fs::create_dir(&dir).unwrap();
        small_config(&dir, "c.json", Some(2.0));
        ok(&tomosar(&dir, &["simulate", "--config", "c.json", "--out", "s.tstk"]));
        let args = [&["filter", "--config", "c.json", "--input", "s.tstk", "--out", "f.tstk"][..], &extra[..]].concat();
        ok(&tomosar(&dir, &args));
        let files: Vec<Vec<u8>> = ["f.tstk", "f.enl.hgtf", "f.manifest.json"]
            .iter()
            .map(|f| fs::read(dir.join(f)).unwrap())
            .collect();
        runs.push(files);
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tomosar"))
        .args(["crlb", "--sigma-b", "100", "--n", "29", "--snr-db", "10", "--kappa", "3"])
        .env("TOMOSAR_THREADS", "2")
        .current_dir(dir.path())
        .output()
        .unwrap();
    ok(&out);
    let bad = Command::new(env!("CARGO_BIN_EXE_tomosar"))
        .args(["crlb", "--sigma-b", "100", "--n", "29", "--snr-db", "10", "--kappa", "3"])
        .env("TOMOSAR_THREADS", "many")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn crlb_prints_bounds() {
    let dir = TempDir::new().unwrap();
    let out = tomosar(dir.path(), &["crlb", "--sigma-b", "100", "--n", "29", "--snr-db", "10", "--kappa", "1"]);
    ok(&out);
    let line = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = line.trim().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 3);
    assert!((values[0] - 0.721).abs() < 1e-3);
    assert!((values[1] - (20.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!((values[2] - 1.862).abs() < 1e-3);

    let out = tomosar(dir.path(), &["crlb", "--sigma-b", "100", "--n", "29", "--snr-db", "10", "--kappa", "4.5", "--delta-phi", "-0.3"]);
    ok(&out);
    let line = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = line.trim().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values[1], 1.0);
    assert_eq!(values[0], values[2]);
}

fn geometry() -> AcquisitionGeometry {
    let baselines = (0..10).map(|i| -120.0 + 27.0 * i as f64).collect();
    AcquisitionGeometry::new(0.031, 704_000.0, 0.68, baselines).unwrap()
}

#[test]
fn zero_stack_gives_empty_maps() {
    let dir = TempDir::new().unwrap();
    let stack = InsarStack::new(geometry(), Array3::zeros((10, 3, 4)), 0).unwrap();
    write_stack(&dir.path().join("z.tstk"), &stack).unwrap();
    fs::create_dir(dir.path().join("out")).unwrap();
    ok(&tomosar(dir.path(), &["invert", "--input", "z.tstk", "--out-prefix", "out/z", "--preview"]));
    let order = read_byte_raster(&dir.path().join("out/z.order.kmap")).unwrap();
    assert_eq!(order.dim(), (3, 4));
    assert!(order.iter().all(|&k| k == 0));
    let height = read_float_raster(&dir.path().join("out/z.height.hgtf")).unwrap();
    assert!(height.iter().all(|h| h.is_nan()));
    let csv = fs::read_to_string(dir.path().join("out/z.scatterers.csv")).unwrap();
    assert_eq!(csv, "row,col,k,elevation_m,height_m,amp_re,amp_im\n");
    assert!(dir.path().join("out/z.height.pgm").exists());
    assert!(dir.path().join("out/z.manifest.json").exists());
}

#[test]
fn noiseless_single_scatterer_row() {
    let dir = TempDir::new().unwrap();
    let geom = geometry();
    let grid = ElevationGrid::for_geometry(&geom, 4).unwrap();
    let index = grid.nearest_index(40.0);
    let s = grid.samples()[index];
    let xi = tomosar_core::model::spatial_frequencies(&geom);
    let images = Array3::from_shape_fn((10, 1, 2), |(k, _, _)| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * xi[k] * s));
    write_stack(&dir.path().join("p.tstk"), &InsarStack::new(geom.clone(), images, 0).unwrap()).unwrap();
    ok(&tomosar(dir.path(), &["invert", "--input", "p.tstk", "--out-prefix", "p"]));
    let csv = fs::read_to_string(dir.path().join("p.scatterers.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for (c, row) in rows.iter().enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(&f[..3], &["0", &c.to_string(), "0"]);
        assert_eq!(f[3], s.to_string());
        assert_eq!(f[4], (s * geom.incidence_angle.sin()).to_string());
        // the stack file stores single precision samples
        let amp = Complex64::new(f[5].parse().unwrap(), f[6].parse().unwrap());
        assert!((amp - Complex64::new(1.0, 0.0)).norm() < 1e-6, "{amp}");
    }
    let order = read_byte_raster(&dir.path().join("p.order.kmap")).unwrap();
    assert!(order.iter().all(|&k| k == 1));
}

#[test]
fn invert_rejects_mismatched_config() {
    let dir = TempDir::new().unwrap();
    small_config(dir.path(), "c.json", None);
    let stack = InsarStack::new(geometry(), Array3::zeros((10, 3, 4)), 0).unwrap();
    write_stack(&dir.path().join("z.tstk"), &stack).unwrap();
    let out = tomosar(dir.path(), &["invert", "--input", "z.tstk", "--config", "c.json", "--out-prefix", "z"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn perfect_estimate_has_zero_spread() {
    let dir = TempDir::new().unwrap();
    small_config(dir.path(), "c.json", None);
    ok(&tomosar(dir.path(), &["simulate", "--config", "c.json", "--out", "s.tstk"]));
    ok(&tomosar(
        dir.path(),
        &["evaluate", "--config", "c.json", "--height", "s.truth.hgtf", "--truth", "s.truth.hgtf", "--out", "e.csv", "--profile", "row:8"],
    ));
    let csv = fs::read_to_string(dir.path().join("e.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "region,truth_m,mean_m,std_m,mean_error_m,count,detection_rate");
    assert_eq!(lines[1], "shape1,30,30,0,0,80,1");
    let profile = fs::read_to_string(dir.path().join("e.profile.csv")).unwrap();
    assert_eq!(profile.lines().count(), 1 + 24);
    assert!(profile.lines().any(|l| l == "5,30,30"));

    let out = tomosar(
        dir.path(),
        &["evaluate", "--config", "c.json", "--height", "s.truth.hgtf", "--truth", "s.truth.hgtf", "--out", "e.csv", "--erosion", "9"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn manifest_reproduces_run() {
    let root = TempDir::new().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    fs::create_dir(&a).unwrap();
    fs::create_dir(&b).unwrap();
    small_config(&a, "c.json", Some(0.0));
    ok(&tomosar(&a, &["simulate", "--config", "c.json", "--out", "s.tstk"]));
    fs::copy(a.join("s.manifest.json"), b.join("m.json")).unwrap();
    ok(&tomosar(&b, &["simulate", "--config", "m.json", "--out", "s.tstk"]));
    for f in ["s.tstk", "s.truth.hgtf"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let config = |d: &Path| -> serde_json::Value {
        serde_json::from_str::<serde_json::Value>(&fs::read_to_string(d.join("s.manifest.json")).unwrap()).unwrap()["config"].clone()
    };
    assert_eq!(config(&a), config(&b));
}

#[test]
fn end_to_end_small_scene() {
    let dir = TempDir::new().unwrap();
    small_config(dir.path(), "c.json", Some(6.0));
    ok(&tomosar(dir.path(), &["simulate", "--config", "c.json", "--out", "s.tstk"]));
    ok(&tomosar(dir.path(), &["filter", "--config", "c.json", "--input", "s.tstk", "--out", "f.tstk"]));
    ok(&tomosar(dir.path(), &["invert", "--config", "c.json", "--input", "f.tstk", "--out-prefix", "inv"]));
    let out = tomosar(
        dir.path(),
        &[
            "evaluate", "--config", "c.json", "--height", "inv.height.hgtf", "--truth", "s.truth.hgtf", "--scatterers",
            "inv.scatterers.csv", "--out", "stats.csv",
        ],
    );
    ok(&out);
    let csv = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let f: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let (mean, std): (f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap());
    assert!((mean - 30.0).abs() < 1.0, "{csv}");
    assert!(std < 1.0, "{csv}");
    let hist = fs::read_to_string(dir.path().join("stats.histogram.csv")).unwrap();
    assert!(hist.starts_with("kappa_start,kappa_end,count\n"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("double scatterers"));
}

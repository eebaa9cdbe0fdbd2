//! End-to-end tests of the `amr` binary: exit codes, output files, and the
//! run manifest.

use std::path::Path;
use std::process::{Command, Output};

use amr::RasterGrid;

const BIN: &str = env!("CARGO_BIN_EXE_amr");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn amr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Deterministic 16x16 raster plus four points (two per arm) at cell
/// centers. Returns the raster and points paths.
fn write_fixture(dir: &Path, z: [u8; 4]) -> (String, String) {
    let values: Vec<f64> = (0..256)
        .map(|i| ((i as f64) * 0.37).sin() + 0.001 * i as f64)
        .collect();
    let grid = RasterGrid::new(0.0, 0.0, 1.0, 16, 16, values).unwrap();
    let raster = dir.join("outcomes.asc");
    grid.write_ascii_grid(&raster).unwrap();

    let points = dir.join("points.csv");
    let mut csv = String::from("id,x,y,z\n");
    for (i, (x, y)) in [(4.5, 4.5), (11.5, 4.5), (4.5, 11.5), (11.5, 11.5)]
        .iter()
        .enumerate()
    {
        csv.push_str(&format!("p{i},{x},{y},{}\n", z[i]));
    }
    std::fs::write(&points, csv).unwrap();
    (
        raster.to_string_lossy().into_owned(),
        points.to_string_lossy().into_owned(),
    )
}

#[test]
fn estimate_end_to_end_writes_curve_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (raster, points) = write_fixture(dir.path(), [1, 0, 1, 0]);
    let out_dir = dir.path().join("results");
    let out = run(&[
        "estimate",
        "--raster", &raster,
        "--points", &points,
        "--distances", "1:3:1",
        "--design", "bernoulli:0.5",
        "--hband", "2",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let csv = std::fs::read_to_string(out_dir.join("curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "d,estimate,se,ci_low,ci_high,n1,n0");
    assert_eq!(lines.count(), 3, "one row per distance");

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("curve.json")).unwrap())
            .unwrap();
    assert_eq!(json["schema"], "amr/v1");
    assert_eq!(json["kind"], "curve");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "estimate");
    assert!(manifest["seed"].is_null(), "estimate takes no seed");
    assert_eq!(manifest["config"]["distances"], "1:3:1");
    assert!(manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|p| p.as_str().unwrap().ends_with("curve.csv")));
}

#[test]
fn estimate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (raster, points) = write_fixture(dir.path(), [1, 0, 1, 0]);
    let curve = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = run(&[
            "estimate",
            "--raster", &raster,
            "--points", &points,
            "--distances", "1:3:1",
            "--design", "bernoulli:0.5",
            "--hband", "2",
            "--out", out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        std::fs::read_to_string(out_dir.join("curve.csv")).unwrap()
    };
    assert_eq!(curve("a"), curve("b"));
}

#[test]
fn missing_z_column_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (raster, points) = write_fixture(dir.path(), [1, 0, 1, 0]);
    let no_z = dir.path().join("no_z.csv");
    let stripped: String = std::fs::read_to_string(&points)
        .unwrap()
        .lines()
        .map(|l| {
            let cut = l.rfind(',').unwrap();
            format!("{}\n", &l[..cut])
        })
        .collect();
    std::fs::write(&no_z, stripped).unwrap();
    let out = run(&[
        "estimate",
        "--raster", &raster,
        "--points", no_z.to_str().unwrap(),
        "--distances", "1:3:1",
        "--design", "bernoulli:0.5",
        "--hband", "2",
        "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("z"), "stderr: {}", stderr(&out));
}

#[test]
fn malformed_raster_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, points) = write_fixture(dir.path(), [1, 0, 1, 0]);
    let bad = dir.path().join("bad.asc");
    std::fs::write(&bad, "NCOLS 2\nNROWS 2\n1 2\n3 4\n").unwrap();
    let out = run(&[
        "estimate",
        "--raster", bad.to_str().unwrap(),
        "--points", &points,
        "--distances", "1:3:1",
        "--design", "bernoulli:0.5",
        "--hband", "2",
        "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
}

#[test]
fn nodata_cells_are_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, points) = write_fixture(dir.path(), [1, 0, 1, 0]);
    let bad = dir.path().join("nodata.asc");
    let mut text = String::from(
        "NCOLS 16\nNROWS 16\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\nNODATA_value -9999\n",
    );
    for _ in 0..16 {
        text.push_str(&"-9999 ".repeat(15));
        text.push_str("-9999\n");
    }
    std::fs::write(&bad, text).unwrap();
    let out = run(&[
        "estimate",
        "--raster", bad.to_str().unwrap(),
        "--points", &points,
        "--distances", "1:3:1",
        "--design", "bernoulli:0.5",
        "--hband", "2",
        "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
}

#[test]
fn one_armed_assignment_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let (raster, points) = write_fixture(dir.path(), [1, 1, 1, 1]);
    let out = run(&[
        "estimate",
        "--raster", &raster,
        "--points", &points,
        "--distances", "1:3:1",
        "--design", "bernoulli:0.5",
        "--hband", "2",
        "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "stderr: {}", stderr(&out));
}

#[test]
fn permute_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (raster, points) = write_fixture(dir.path(), [1, 0, 1, 0]);
    let out = run(&[
        "permute",
        "--raster", &raster,
        "--points", &points,
        "--distances", "1:3:1",
        "--design", "bernoulli:0.5",
        "--stat", "d=2",
        "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "clap rejects a missing --seed");
}

#[test]
fn permute_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (raster, points) = write_fixture(dir.path(), [1, 0, 1, 0]);
    let out_dir = dir.path().join("perm");
    let out = run(&[
        "permute",
        "--raster", &raster,
        "--points", &points,
        "--distances", "1:3:1",
        "--design", "bernoulli:0.5",
        "--stat", "window=1:3",
        "--reps", "200",
        "--seed", "11",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("permutation.json")).unwrap(),
    )
    .unwrap();
    let p = json["payload"]["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 11);
}

#[test]
fn simulate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sim");
    let out = run(&[
        "simulate",
        "--kind", "additive",
        "--n-points", "16",
        "--grid", "40",
        "--scene-seed", "1",
        "--reps", "100",
        "--seed", "5",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("experiment.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["payload"]["replications"], 100);
    assert!(json["payload"]["summaries"].as_array().unwrap().len() >= 2);
}

#[test]
fn oracle_modes_agree() {
    let dir = tempfile::tempdir().unwrap();
    let truth = |mode: &str, name: &str| {
        let out_dir = dir.path().join(name);
        let out = run(&[
            "oracle",
            "--kind", "additive",
            "--n-points", "4",
            "--grid", "20",
            "--scene-seed", "7",
            "--mode", mode,
            "--out", out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        let json: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out_dir.join("truth.json")).unwrap(),
        )
        .unwrap();
        json["payload"]["values"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect::<Vec<_>>()
    };
    let analytic = truth("analytic", "a");
    let enumerated = truth("enumerate", "e");
    for (a, e) in analytic.iter().zip(&enumerated) {
        assert!((a - e).abs() <= 1e-10, "analytic {a} vs enumerate {e}");
    }
}

#[test]
fn bad_distances_spec_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (raster, points) = write_fixture(dir.path(), [1, 0, 1, 0]);
    let out = run(&[
        "estimate",
        "--raster", &raster,
        "--points", &points,
        "--distances", "nonsense",
        "--design", "bernoulli:0.5",
        "--hband", "2",
        "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
}

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use devnet::fixtures::rolled_grid;
use devnet::io::NetFile;
use devnet::net::make_grid;
use serde_json::Value;
use tempfile::TempDir;

fn devnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_devnet")).args(args).output().expect("run devnet")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn grid_file(dir: &TempDir, name: &str, rows: usize, cols: usize) -> String {
    let p = path(dir, name);
    NetFile::from_net(&make_grid(rows, cols, 1.0).unwrap()).save(&p).unwrap();
    p
}

fn write_handles(dir: &TempDir, name: &str, handles: &[(usize, [f64; 3])]) -> String {
    let p = path(dir, name);
    let list: Vec<Value> = handles.iter().map(|(id, t)| serde_json::json!({ "id": id, "target": t })).collect();
    fs::write(&p, serde_json::to_string(&list).unwrap()).unwrap();
    p
}

#[test]
fn deform_with_rest_handles_returns_the_input() {
    let dir = TempDir::new().unwrap();
    let net = grid_file(&dir, "grid.json", 5, 5);
    let handles = write_handles(&dir, "h.json", &[(0, [0.0, 0.0, 0.0]), (24, [4.0, 4.0, 0.0])]);
    let out = path(&dir, "out.json");
    let run = devnet(&["deform", "--net", &net, "--handles", &handles, "--out", &out]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let (a, b) = (NetFile::load(&net).unwrap(), NetFile::load(&out).unwrap());
    assert_eq!(a.positions, b.positions);
    let summary: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(summary["converged"], Value::Bool(true));
}

#[test]
fn deform_that_cannot_converge_exits_2_with_a_trace() {
    let dir = TempDir::new().unwrap();
    let net = grid_file(&dir, "grid.json", 8, 8);
    let handles = write_handles(&dir, "h.json", &[(0, [0.0, 0.0, 0.0]), (63, [6.5, 7.0, 2.5])]);
    let out = path(&dir, "out.json");
    let run = devnet(&["deform", "--net", &net, "--handles", &handles, "--out", &out, "--max-outer", "2"]);
    assert_eq!(run.status.code(), Some(2));
    let trace: Value = serde_json::from_str(&fs::read_to_string(format!("{out}.trace.json")).unwrap()).unwrap();
    assert_eq!(trace["trace"].as_array().unwrap().len(), 2);
    assert!(Path::new(&out).exists(), "best found net is still written");
}

#[test]
fn bad_input_exits_1() {
    let dir = TempDir::new().unwrap();
    let broken = path(&dir, "broken.json");
    fs::write(&broken, "{\"format_version\": \"1.0\", \"rows\": ").unwrap();
    let run = devnet(&["deform", "--net", &broken, "--out", &path(&dir, "o.json")]);
    assert_eq!(run.status.code(), Some(1));
    let net = grid_file(&dir, "grid.json", 3, 3);
    let handles = write_handles(&dir, "h.json", &[(99, [0.0; 3])]);
    let run = devnet(&["deform", "--net", &net, "--handles", &handles, "--out", &path(&dir, "o.json")]);
    assert_eq!(run.status.code(), Some(1));
    assert_eq!(devnet(&["verify-taylor", "--surface", "torus"]).status.code(), Some(1));
}

#[test]
fn verify_taylor_reports_the_geodesic_cylinder_as_third_order() {
    let run = devnet(&["verify-taylor", "--surface", "cylinder-geodesic", "--json"]);
    assert_eq!(run.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&run.stdout).unwrap();
    let slope = report["slope"].as_f64().unwrap_or(f64::INFINITY);
    assert!(slope >= 2.9, "slope {slope}");
    assert_eq!(report["class"], "orthogonal-geodesic");
    let table = devnet(&["verify-taylor", "--surface", "cylinder-geodesic"]);
    let text = String::from_utf8(table.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 1 + 5 + 2);
}

#[test]
fn make_grid_and_export_obj() {
    let dir = TempDir::new().unwrap();
    let net = path(&dir, "g.json");
    assert_eq!(devnet(&["make-grid", "--rows", "2", "--cols", "2", "--out", &net]).status.code(), Some(0));
    let obj = path(&dir, "g.obj");
    for (flag, faces) in [(None, 1), (Some("--triangulate"), 2)] {
        let mut args = vec!["export-obj", "--net", &net, "--out", &obj];
        args.extend(flag);
        assert_eq!(devnet(&args).status.code(), Some(0));
        let text = fs::read_to_string(&obj).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), faces);
    }
}

#[test]
fn analyze_emits_one_record_per_quantity() {
    let dir = TempDir::new().unwrap();
    let net = path(&dir, "rolled.json");
    NetFile::from_net(&rolled_grid(5, 9, 1.0, PI / 2.0).unwrap()).save(&net).unwrap();
    let run = devnet(&["analyze", "--net", &net]);
    assert_eq!(run.status.code(), Some(0));
    let records: Vec<Value> = String::from_utf8(run.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let kinds: Vec<&str> = records.iter().map(|r| r["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["gauss_map", "rulings", "gauss_1d_score", "boundary_signature"]);
    assert!((records[2]["score"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(records[3]["corners"].as_array().unwrap().len(), 4);
}

#[test]
fn extend_adds_rows() {
    let dir = TempDir::new().unwrap();
    let net = grid_file(&dir, "grid.json", 4, 5);
    let out = path(&dir, "ext.json");
    let run = devnet(&["extend", "--net", &net, "--side", "top", "--length", "1", "--angle", "1.5707963267948966", "--rows", "3", "--out", &out]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let grown = NetFile::load(&out).unwrap();
    assert_eq!((grown.rows, grown.cols), (7, 5));
}

#[test]
fn interpolation_writes_frames_and_telemetry_deterministically() {
    let dir = TempDir::new().unwrap();
    let source = grid_file(&dir, "flat.json", 5, 9);
    let target = path(&dir, "rolled.json");
    NetFile::from_net(&rolled_grid(5, 9, 1.0, PI / 2.0).unwrap()).save(&target).unwrap();
    let mut outputs = Vec::new();
    for run_dir in ["a", "b"] {
        let out_dir = path(&dir, run_dir);
        let run = devnet(&["interpolate", "--source", &source, "--target", &target, "--frames", "4", "--out-dir", &out_dir]);
        assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
        let mut files: Vec<_> = fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        files.sort();
        assert_eq!(files, ["frame_000.json", "frame_001.json", "frame_002.json", "frame_003.json", "telemetry.jsonl"]);
        outputs.push(files.iter().map(|f| fs::read(Path::new(&out_dir).join(f)).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(outputs[0], outputs[1]);
}

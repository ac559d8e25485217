use std::path::Path;
use std::process::{Command, Output};

use elastica_np::cli::{export_csv, fit_rate, ConvergenceRecord, SpectrumRow};
use elastica_np::spectra::{NpMode, Subspace};
use serde_json::json;
use tempfile::TempDir;

fn run(kind: &str, config: &serde_json::Value, dir: &Path, env: &[(&str, &str)]) -> Output {
    let path = dir.join(format!("{kind}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_elastica-np"));
    cmd.arg(kind).arg("--config").arg(&path).arg("--out").arg(dir.join("out"));
    cmd.env_remove("ELASTICA_NP_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn single_circle() -> serde_json::Value {
    json!({
        "run": {"kind": "spectrum", "seed": 7, "mode": "N", "subspace": "full"},
        "geometry": {
            "outer": {"kind": "circle", "center": [0.0, 0.0], "radius": 0.9},
            "omega": {"kind": "circle", "center": [0.0, 0.0], "radius": 0.25},
            "eps": 1.0, "N_incl": 32, "N_outer": 128
        },
        "material": {"lambda": 1.0, "mu": 1.0},
        "output": {"dir": "unused"}
    })
}

fn case1() -> serde_json::Value {
    json!({
        "run": {"kind": "converge", "seed": 1},
        "geometry": {"eps": [1.0], "N_incl": 32, "N_outer": 128},
        "material": {"lambda": 1.0, "mu": 1.0, "contrast": {"case": 1, "values": [1e2, 1e3, 1e4, 1e5]}},
        "load": {"A": [[0.7, 0.3], [0.3, -0.2]]}
    })
}

#[test]
fn spectrum_run_writes_sorted_rows_and_manifest() {
    let dir = TempDir::new().unwrap();
    let out = run("spectrum", &single_circle(), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/spectrum.csv"));
    assert_eq!(header, ["mode", "subspace", "eps", "index", "theta"]);
    assert_eq!(rows.len(), 64);
    let theta: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(theta.windows(2).all(|w| w[0] <= w[1]));
    assert!(rows.iter().all(|r| r[0] == "N" && r[1] == "full"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "spectrum");
    assert_eq!(manifest["config"]["run"]["seed"], 7);
    assert_eq!(manifest["summary"][0]["near_half"], 3);
}

#[test]
fn spectrum_output_is_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let mut cfg = single_circle();
    cfg["geometry"]["outer"]["radius"] = json!(2.0);
    cfg["geometry"]["eps"] = json!([1.0, 0.9]);
    cfg["run"]["subspace"] = json!("rigid_orthogonal");
    assert!(run("spectrum", &cfg, dir.path(), &[("ELASTICA_NP_THREADS", "1")]).status.success());
    let first = std::fs::read(dir.path().join("out/spectrum.csv")).unwrap();
    assert!(run("spectrum", &cfg, dir.path(), &[("ELASTICA_NP_THREADS", "2")]).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("out/spectrum.csv")).unwrap());
}

#[test]
fn converge_case1_errors_decrease() {
    let dir = TempDir::new().unwrap();
    let out = run("converge", &case1(), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/converge.csv"));
    assert_eq!(header, ["case", "param", "error", "load_norm", "phi_norm", "seconds"]);
    assert_eq!(rows.len(), 4);
    let err: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(err.windows(2).all(|w| w[1] < w[0]), "{err:?}");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let slope = manifest["summary"][0]["slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() < 0.15, "{slope}");
    assert!(manifest["summary"][0]["stability_constant"].as_f64().unwrap() > 0.0);
    let strip = |rows: Vec<Vec<String>>| rows.into_iter().map(|mut r| { r.pop(); r }).collect::<Vec<_>>();
    assert!(run("converge", &case1(), dir.path(), &[("ELASTICA_NP_THREADS", "3")]).status.success());
    assert_eq!(strip(rows), strip(read_csv(&dir.path().join("out/converge.csv")).1));
}

#[test]
fn solve_and_gap_runs() {
    let dir = TempDir::new().unwrap();
    let mut cfg = case1();
    cfg["run"]["kind"] = json!("solve");
    cfg["material"]["contrast"] = json!({"case": 3, "values": [10.0, 100.0]});
    let out = run("solve", &cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/solve.csv"));
    assert_eq!(header, ["param", "component", "node", "x", "y", "phi_x", "phi_y"]);
    assert_eq!(rows.len(), 2 * 5 * 32);
    let cfg = json!({"geometry": {"eps": 1.0, "N_incl": 32, "N_outer": 128}});
    let out = run("gap", &cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/gap.csv"));
    assert_eq!(header, ["eps", "mN", "MN", "mD", "MD", "delta1"]);
    assert_eq!(rows.len(), 1);
    assert!(rows[0][5].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn schema_violations_exit_2_with_field_path() {
    let dir = TempDir::new().unwrap();
    let mut cfg = single_circle();
    cfg["material"]["mu"] = json!(-1.0);
    let out = run("spectrum", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("material.mu"));
    let mut cfg = single_circle();
    cfg["geometry"]["N_incl"] = json!(31);
    let out = run("spectrum", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry.N_incl"));
    let mut cfg = single_circle();
    cfg["geometry"]["typo"] = json!(1);
    assert_eq!(run("spectrum", &cfg, dir.path(), &[]).status.code(), Some(2));
    assert_eq!(run("gap", &single_circle(), dir.path(), &[]).status.code(), Some(2));
    assert_eq!(run("converge", &json!({}), dir.path(), &[]).status.code(), Some(2));
    let mut cfg = case1();
    cfg["material"]["contrast"] = json!({"case": 3, "values": [100.0], "lambda_tilde": 1e9});
    assert_eq!(run("converge", &cfg, dir.path(), &[]).status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn numerical_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let mut cfg = single_circle();
    cfg["geometry"]["outer"]["radius"] = json!(0.6);
    let out = run("spectrum", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn csv_export_round_trips_and_empty_is_header_only() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("empty.csv");
    export_csv::<ConvergenceRecord>(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "case,param,error,load_norm,phi_norm,seconds\n");
    let rows: Vec<SpectrumRow> = [-0.3141592653589793, 1.0 / 3.0, 0.49999999999999994]
        .iter()
        .enumerate()
        .map(|(index, &theta)| SpectrumRow { mode: NpMode::Dirichlet, subspace: Subspace::RigidOrthogonal, eps: 0.1, index, theta })
        .collect();
    let path = dir.path().join("rows.csv");
    export_csv(&rows, &path).unwrap();
    let (_, back) = read_csv(&path);
    for (r, b) in rows.iter().zip(&back) {
        assert_eq!(b[0], "D");
        assert_eq!(b[4].parse::<f64>().unwrap().to_bits(), r.theta.to_bits());
        assert_eq!(b[2].parse::<f64>().unwrap().to_bits(), 0.1f64.to_bits());
    }
    let bad = dir.path().join("missing/dir/x.csv");
    let e = export_csv(&rows, &bad).unwrap_err();
    assert!(e.to_string().contains("missing/dir/x.csv"), "{e}");
}

#[test]
fn fit_rate_on_records() {
    let rec = |param: f64, error: f64| ConvergenceRecord {
        case: 3,
        param,
        error,
        load_norm: 1.0,
        phi_norm: 1.0,
        eps: 1.0,
        n_incl: 64,
        n_outer: 256,
        seconds: 0.0,
    };
    let f = fit_rate(&[rec(10.0, 0.1), rec(100.0, 0.01), rec(1000.0, 0.001)]).unwrap();
    assert!((f.slope + 1.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
    assert!(fit_rate(&[rec(10.0, 0.1), rec(1000.0, 0.001)]).is_err());
}

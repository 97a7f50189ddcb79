use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sqgnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqgnet"))
        .args(args)
        .env("SQGNET_THREADS", "1")
        .output()
        .expect("spawn sqgnet")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file in `dir`, sorted, with its bytes.
fn contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

const SMALL_VERIFY: &str = r#"{
  "kind": "verify-ops",
  "quadrature": { "ring_count": 8, "angular_nodes": 16, "radial_order": 3, "corner_angular": 8, "corner_radial": 4 },
  "coincidence": { "polynomials": 2, "points": 3 },
  "regularity": { "probes": 2, "targets": 2, "max_box": 2, "norm_grid": 17 },
  "coercivity": { "probes": 2, "periodic_probes": 1, "grid": [6, 8], "samples": [8, 12] },
  "riesz_l2": { "probes": 2, "grid": [6, 8], "panels": [2, 3] }
}"#;

fn small_verify(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("verify.json");
    fs::write(&cfg, SMALL_VERIFY).unwrap();
    cfg
}

#[test]
fn verify_ops_reruns_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_verify(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = sqgnet(&["verify-ops", "--config", path(&cfg), "--out", path(out)]);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ca, cb) = (contents(&a), contents(&b));
    assert!(ca.iter().any(|(n, _)| n == "verify_ops.json"));
    assert_eq!(ca, cb);
}

#[test]
fn sqg_solve_reruns_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("solve.json");
    fs::write(&cfg, r#"{"kind": "sqg-solve", "solver": {"n": 32}, "t_final": 0.5, "out_every": 0.25}"#).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = sqgnet(&["sqg-solve", "--config", path(&cfg), "--out", path(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ca = contents(&a);
    assert_eq!(ca.iter().filter(|(n, _)| n.ends_with(".sqgf")).count(), 3);
    assert_eq!(ca, contents(&b));
}

#[test]
fn tampered_kernel_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_verify(tmp.path());
    let out = tmp.path().join("out");
    let o = sqgnet(&["verify-ops", "--config", path(&cfg), "--out", path(&out), "--debug-tamper-kernel"]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("verify_ops.json")).unwrap()).unwrap();
    let failed: Vec<&str> = report["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|v| v["pass"] == false)
        .map(|v| v["property"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"coincidence-lambda"), "{failed:?}");
}

#[test]
fn zero_tolerance_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_verify(tmp.path());
    let o = sqgnet(&[
        "verify-ops",
        "--config",
        path(&cfg),
        "--out",
        path(&tmp.path().join("out")),
        "--debug-zero-tolerance",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mismatched_config_kind_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"kind": "sqg-solve"}"#).unwrap();
    let o = sqgnet(&["verify-ops", "--config", path(&cfg), "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&cfg, r#"{"kind": "verify-ops", "no_such_field": 1}"#).unwrap();
    let o = sqgnet(&["verify-ops", "--config", path(&cfg), "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unstable_fixed_step_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"kind": "sqg-solve", "solver": {"n": 32, "dt_fixed": 10.0, "dt_max": 10.0}, "t_final": 20.0}"#).unwrap();
    let o = sqgnet(&["sqg-solve", "--config", path(&cfg), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn net_round_trip_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("n.tnet");
    let o = sqgnet(&["net-init", "--layers", "3,8,8,1", "--seed", "5", "--out", path(&net)]);
    assert_eq!(o.status.code(), Some(0));
    let eval = |alpha: &str| {
        let o = sqgnet(&["net-eval", "--checkpoint", path(&net), "--point", "0.2,-1.0,0.5", "--alpha", alpha]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["value"].as_f64().unwrap()
    };
    let v = eval("0,0,0");
    let d = eval("0,1,0");
    assert!(v.is_finite() && d.is_finite());
    assert_eq!(v, eval("0,0,0"));
}

#[test]
fn op_apply_matches_exact_values_on_trig_polynomials() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("op.csv");
    let o = sqgnet(&["op-apply", "--grid", "3", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let mut rows = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        let f = |i: usize| r[i].parse::<f64>().unwrap();
        assert!((f(2) - f(5)).abs() <= 1e-5 * (1.0 + f(5).abs()));
        assert!((f(3) - f(6)).abs() <= 1e-5 * (1.0 + f(6).abs()));
        rows += 1;
    }
    assert_eq!(rows, 9);
}

#[test]
fn kernel_dump_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("k.csv");
    assert_eq!(sqgnet(&["kernel-dump", "--n", "6", "--m", "8", "--out", path(&out)]).status.code(), Some(0));
    assert_eq!(csv::Reader::from_path(&out).unwrap().records().count(), 36);
    assert_eq!(sqgnet(&["kernel-dump", "--n", "5", "--out", path(&out)]).status.code(), Some(2));
}

#[test]
fn bound_check_reads_saved_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("train.json");
    fs::write(
        &cfg,
        r#"{"kind": "pinn-train", "seeds": [3], "reference": {"solver": {"n": 32}},
            "train": {"layers": [3, 6, 1], "steps": 4, "log_every": 2}}"#,
    )
    .unwrap();
    let out = tmp.path().join("train");
    let o = sqgnet(&["pinn-train", "--config", path(&cfg), "--out", path(&out)]);
    // four steps cannot reach the reduction target
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let report = out.join("report_seed3.json");
    assert!(report.exists());
    let o = sqgnet(&[
        "bound-check",
        "--report",
        path(&report),
        "--out",
        path(&tmp.path().join("bound")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("bound/bound_check.json")).unwrap()).unwrap();
    assert!(v["rows"][0]["c_min"].as_f64().is_some());
}

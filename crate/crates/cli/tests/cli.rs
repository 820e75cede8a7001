use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn lavc(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lavc"))
        .current_dir(dir)
        .env_remove("LAVC_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_data(dir: &Path, n: usize) {
    let mut text = String::from("u,x1,x2,x3,x4,y\n");
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        let x2 = ((i * 7919) % 101) as f64 / 50.0 - 1.0;
        let x3 = ((i * 104729) % 97) as f64 / 48.0 - 1.0;
        let x4 = ((i * 1299709) % 89) as f64 / 44.0 - 1.0;
        let e = ((i * 15485863) % 83) as f64 / 83.0 - 0.5;
        let y = 1.0 + x2 * u + 0.5 * x3 + x4 * (2.0 * u).sin() + 0.1 * e;
        text += &format!("{u},1,{x2},{x3},{x4},{y}\n");
    }
    std::fs::write(dir.join("d.csv"), text).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_varying_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 400);
    let out = lavc(
        dir.path(),
        &["fit-varying", "--input", "d.csv", "--group-size", "10", "--bandwidth", "0.3", "--degree", "3", "--target", "4", "--grid", "200"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "u,value,lower,upper,bias_est");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').take(4).map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 200);
    for r in &rows {
        assert!(r[2] <= r[1] && r[1] <= r[3]);
    }
    let manifest = read_json(&dir.path().join("curve.csv.manifest.json"));
    assert_eq!(manifest["command"], "fit-varying");
    assert_eq!(manifest["settings"]["target"], 4);
    assert_eq!(manifest["settings"]["kernel"], "epanechnikov");
}

#[test]
fn t3_json_carries_both_referrals() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 400);
    let out = lavc(
        dir.path(),
        &["test", "--type", "t3", "--input", "d.csv", "--group-size", "10", "--target", "4"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("test.json"));
    assert_eq!(v["test"], "t3");
    assert!(v["statistic"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["null_law"]["law"], "std_normal");
    assert!((0.0..=1.0).contains(&v["p_value"].as_f64().unwrap()));
    assert_eq!(v["alternative"]["null_law"]["law"], "chi_squared");
    assert_eq!(v["alternative"]["null_law"]["df"], 40.0);
    assert!((0.0..=1.0).contains(&v["alternative"]["p_value"].as_f64().unwrap()));
    assert_eq!(v["config"]["target"], 4);
}

#[test]
fn manifest_reruns_to_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 300);
    let out = lavc(
        dir.path(),
        &["test", "--type", "t2", "--input", "d.csv", "--group-size", "10", "--output", "a.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = lavc(
        dir.path(),
        &["test", "--config", "a.json.manifest.json", "--output", "b.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 300);
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"input": "d.csv", "type": "t1", "group_size": 5, "bandwidth": 0.4}"#,
    )
    .unwrap();
    let out = lavc(dir.path(), &["test", "--config", "cfg.json", "--group-size", "6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("test.json"));
    assert_eq!(v["config"]["group_size"], 6);
    assert_eq!(v["config"]["bandwidth"], 0.4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 100);
    let code = |args: &[&str]| lavc(dir.path(), args).status.code().unwrap();

    assert_eq!(code(&["fit-varying", "--input", "missing.csv", "--bandwidth", "0.3"]), 2);
    assert_eq!(code(&["fit-varying", "--input", "d.csv", "--bandwidth", "0.3", "--y-column", "z"]), 2);
    std::fs::write(dir.path().join("bad.csv"), "u,x1,y\n0.1,1,2\n0.2,oops,3\n").unwrap();
    let out = lavc(dir.path(), &["fit-varying", "--input", "bad.csv", "--bandwidth", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 2") && stderr.contains("x1"), "{stderr}");

    assert_eq!(code(&["fit-varying", "--input", "d.csv"]), 4);
    assert_eq!(code(&["fit-varying", "--input", "d.csv", "--bandwidth", "0.3", "--group-size", "2"]), 4);
    assert_eq!(code(&["fit-varying", "--input", "d.csv", "--bandwidth", "0.3", "--degree", "2"]), 4);
    assert_eq!(code(&["fit-varying", "--input", "d.csv", "--bandwidth", "0.3", "--target", "9"]), 4);
    assert_eq!(code(&["test", "--input", "d.csv", "--type", "t7"]), 4);
    assert_eq!(code(&["simulate", "--example", "12", "--bandwidth", "0.5"]), 4);

    let mut text = String::from("u,x1,x2,y\n");
    for i in 0..40 {
        let x2 = if i < 10 { 1.0 } else { (i % 3) as f64 };
        text += &format!("{},1,{x2},{}\n", i as f64 / 40.0, i % 5);
    }
    std::fs::write(dir.path().join("singular.csv"), text).unwrap();
    let out = lavc(dir.path(), &["fit-varying", "--input", "singular.csv", "--bandwidth", "0.5"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("group 0") && stderr.contains("data rows 1, 2"), "{stderr}");
}

#[test]
fn fit_semi_reports_named_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), 400);
    let out = lavc(
        dir.path(),
        &["fit-semi", "--input", "d.csv", "--x-columns", "x1,x2,x4", "--z-columns", "x3"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("semi.json"));
    let b = &v["coefficients"][0];
    assert_eq!(b["name"], "x3");
    assert!((b["estimate"].as_f64().unwrap() - 0.5).abs() < 0.05);
    assert!(b["std_error"].as_f64().unwrap() > 0.0);
    assert_eq!(v["varying"].as_array().unwrap().len(), 40);
}

#[test]
fn simulate_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = lavc(
        dir.path(),
        &["simulate", "--study", "size-power", "--n", "400", "--reps", "20", "--a-values", "0,0.5", "--out-dir", "sp"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "report.csv", "density.csv", "manifest.json"] {
        assert!(dir.path().join("sp").join(f).exists(), "{f}");
    }
    let report = read_json(&dir.path().join("sp/report.json"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 6);
    let manifest = read_json(&dir.path().join("sp/manifest.json"));
    assert_eq!(manifest["settings"]["seed"], 42);
    assert_eq!(manifest["settings"]["example"], 7);
}

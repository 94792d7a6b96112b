use std::path::{Path, PathBuf};
use std::process::Command;

const GENUS1: &str = r#"
[schottky]
generators = [[0.25, 0.9, 0.015]]

[harnack]
alpha_minus = [2.4]
alpha_plus = [-0.4]
beta_minus = [-2.4]
beta_plus = [0.4]
"#;

const GENUS0: &str = r#"
[schottky]
generators = []

[harnack]
alpha_minus = [2.4]
alpha_plus = [-0.4]
beta_minus = [-2.4]
beta_plus = [0.4]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn dimers(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dimers")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_genus1_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g1.toml", GENUS1);
    let (code, stdout, _) = dimers(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["seed"], 0);
    for k in ["periodicity", "kasteleyn", "fay", "dirac"] {
        assert!(v["residuals"][k].as_f64().unwrap().is_finite(), "{k}");
    }
    assert!(v["residuals"]["fay"].as_f64().unwrap() < 1e-9);
}

#[test]
fn coincident_generators_name_disc_disjointness() {
    let dir = tempfile::tempdir().unwrap();
    let text = GENUS1.replace("[[0.25, 0.9, 0.015]]", "[[0.25, 0.9, 0.015], [0.25, 0.9, 0.015]]");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let (code, _, stderr) = dimers(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("disc-disjointness"), "{stderr}");
}

#[test]
fn permuted_harnack_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &GENUS1.replace("alpha_plus = [-0.4]", "alpha_plus = [0.5]"));
    let (code, _, stderr) = dimers(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("cluster ordering"), "{stderr}");
}

#[test]
fn require_periodic_rejects_generic_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g1.toml", GENUS1);
    let (code, stdout, stderr) = dimers(&["validate", cfg.to_str().unwrap(), "--require-periodic"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("periodicity") && stderr.contains("residual"), "{stderr}");
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["residuals"]["periodicity"].as_f64().unwrap() > 0.1);
}

#[test]
fn io_and_usage_errors() {
    let (code, _, _) = dimers(&["validate", "/nonexistent/config.toml"]);
    assert_eq!(code, 4);
    let (code, _, _) = dimers(&["frobnicate", "x.toml"]);
    assert_eq!(code, 2);
    let (code, _, _) = dimers(&["validate"]);
    assert_eq!(code, 2);
}

#[test]
fn selftest_passes_without_config() {
    let (code, stdout, _) = dimers(&["selftest"]);
    assert_eq!(code, 0, "{stdout}");
}

#[test]
fn genus0_amoeba_has_four_arcs_and_no_ovals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g0.toml", GENUS0);
    let out = dir.path().join("out");
    let (code, _, _) = dimers(&["amoeba", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("amoeba_boundary.csv")).unwrap();
    let mut comps: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    comps.dedup();
    assert_eq!(comps.len(), 4);
    assert!(comps.iter().all(|c| c.starts_with("arc:")));
    assert!(out.join("amoeba.svg").exists());
}

#[test]
fn ronkin_rows_satisfy_polygon_relation() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{GENUS1}\n[grid]\nnx = 6\nny = 3\n");
    let cfg = write_config(dir.path(), "g1.toml", &text);
    let out = dir.path().join("out");
    let (code, _, _) = dimers(&["ronkin", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("ronkin.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert!(rows.len() >= 15);
    for r in &rows {
        assert!((r[col("s1")] + r[col("y2")] / std::f64::consts::PI).abs() < 1e-15);
        assert!((r[col("s2")] - r[col("y1")] / std::f64::consts::PI).abs() < 1e-15);
        assert!(r[col("im_r")] > 0.0);
    }
}

#[test]
fn weights_grid_covers_the_patch() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{GENUS1}\n[lattice]\nheight = 8\nwidth = 8\n");
    let cfg = write_config(dir.path(), "g1.toml", &text);
    let out = dir.path().join("out");
    let (code, _, _) = dimers(&["weights", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("weights.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 15 * 15);
    for l in csv.lines().skip(1) {
        let w: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(w > 0.0 && w.is_finite());
    }
}

#[test]
fn sampling_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{GENUS1}\n[chain]\nsweeps = 50\n");
    let cfg = write_config(dir.path(), "g1.toml", &text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let (code, _, _) = dimers(&["sample", cfg.to_str().unwrap(), "--seed", "7", "--out", d.to_str().unwrap()]);
        assert_eq!(code, 0);
    }
    for f in ["config.hex", "height.csv", "height.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (mut sa, mut sb) = (json(&a.join("summary.json")), json(&b.join("summary.json")));
    assert_eq!(sa["seed"], 7);
    let rate = sa["acceptance_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    sa.as_object_mut().unwrap().remove("wall_times");
    sb.as_object_mut().unwrap().remove("wall_times");
    assert_eq!(sa, sb);
    let hex = std::fs::read_to_string(a.join("config.hex")).unwrap();
    assert_eq!(hex.lines().count(), 127);
    assert!(hex.lines().all(|l| l.len() == 127 && l.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())));
}

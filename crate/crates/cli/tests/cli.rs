use std::fs;
use std::path::Path;
use std::process::Command;

const EXP_TS: &str = r#"
seed = 7

[[model.components]]
label = "a"
family = "tempered_stable"
alpha = 1.2
c = 1.0
lambda = 1.0

[kernel]
family = "exp_ma"
theta = 1.0

[series]
grid_points = 129
gamma_cap = 100.0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semimart"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn check_prints_report() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &EXP_TS.replace("exp_ma\"\ntheta = 1.0", "fractional\"\ngamma = 0.2"));
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "Semimartingale");
    assert!(v["conditions"].as_array().unwrap().iter().any(|c| c["id"] == "trunc_case"));
    assert!(v["reasons"].as_array().is_some());
    assert!(v["special"].is_object());
}

#[test]
fn boundary_parameters_are_rejected_with_line() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &EXP_TS.replace("alpha = 1.2", "alpha = 1.0"));
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 7") && err.contains("alpha != 1"), "{err}");

    let cfg = write_config(d.path(), "g.toml", &EXP_TS.replace("exp_ma\"\ntheta = 1.0", "fractional\"\ngamma = 0.5"));
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma != 1/2"));

    let cfg = write_config(d.path(), "w.toml", &EXP_TS.replace("label = \"a\"", "label = \"a\"\nweight = 0.0"));
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m(v) > 0"));

    let cfg = write_config(d.path(), "e.toml", "[model]\ncomponents = []\n[kernel]\nfamily = \"exp_ma\"\ntheta = 1.0\n");
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("must not be empty"));
}

#[test]
fn simulate_is_reproducible_and_manifest_reruns() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", EXP_TS);
    for dir in ["a", "b"] {
        let out = bin().args(["simulate", "--paths", "2", "--jobs", "2", "--config"]).arg(&cfg).arg("--out").arg(d.path().join(dir)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = bin()
        .args(["simulate", "--manifest"])
        .arg(d.path().join("a/manifest.json"))
        .arg("--out")
        .arg(d.path().join("c"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    for f in ["path_0.csv", "path_1.csv", "jumps_0.csv", "jumps_1.csv", "manifest.json"] {
        let a = fs::read(d.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(d.path().join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(d.path().join("c").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_paths_writes_only_manifest() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", EXP_TS);
    let dir = d.path().join("o");
    let out = bin().args(["simulate", "--paths", "0", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("manifest.json")]);
}

#[test]
fn fractional_simulation_has_empty_jump_files() {
    let d = tempfile::tempdir().unwrap();
    let text = EXP_TS.replace("exp_ma\"\ntheta = 1.0", "fractional\"\ngamma = 0.3") + "check_truncation = false\n";
    let cfg = write_config(d.path(), "c.toml", &text);
    let dir = d.path().join("o");
    let out = bin().args(["simulate", "--paths", "2", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for k in 0..2 {
        assert_eq!(fs::read_to_string(dir.join(format!("jumps_{k}.csv"))).unwrap(), "time,size,v\n");
    }
}

#[test]
fn fractional_default_window_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &EXP_TS.replace("exp_ma\"\ntheta = 1.0", "fractional\"\ngamma = 0.3"));
    let out = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(d.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("window_past too short"));
}

#[test]
fn asymmetric_model_is_refused() {
    let d = tempfile::tempdir().unwrap();
    let text = r#"
[[model.components]]
family = "point_mass"
position = 1.0
mass = 1.0

[kernel]
family = "exp_ma"
theta = 1.0
"#;
    let cfg = write_config(d.path(), "c.toml", text);
    let out = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(d.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("symmetric"));
}

#[test]
fn decompose_reports_residuals() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", EXP_TS);
    let dir = d.path().join("o");
    let out = bin().args(["decompose", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let scale = v["path_scale"].as_f64().unwrap();
    assert!(v["max_decomposition_residual"].as_f64().unwrap() <= 1e-10 * scale);
    assert!(v["A_route_disagreement"].as_f64().unwrap() <= v["truncation_bound"].as_f64().unwrap());
    assert!(fs::read_to_string(dir.join("decompose.csv")).unwrap().starts_with("t,X,M,A,A_direct\n"));
}

#[test]
fn decompose_warns_for_non_semimartingale() {
    let d = tempfile::tempdir().unwrap();
    let text = EXP_TS
        .replace("tempered_stable", "stable")
        .replace("lambda = 1.0\n", "")
        .replace("alpha = 1.2", "alpha = 1.5")
        .replace("exp_ma\"\ntheta = 1.0", "fractional\"\ngamma = 0.3")
        + "check_truncation = false\n";
    let cfg = write_config(d.path(), "c.toml", &text);
    let out = bin().args(["decompose", "--config"]).arg(&cfg).arg("--out").arg(d.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "NotSemimartingale");
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a semimartingale"));
}

#[test]
fn empty_series_has_zero_residual() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &EXP_TS.replace("gamma_cap = 100.0", "gamma_cap = 1e-12"));
    let out = bin().args(["decompose", "--config"]).arg(&cfg).arg("--out").arg(d.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["max_decomposition_residual"].as_f64().unwrap(), 0.0);
}

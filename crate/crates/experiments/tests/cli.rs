use std::fs;
use std::process::{Command, Output};

use dbprop_experiments::ExperimentConfig;

fn dbprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbprop")).args(args).output().expect("spawn dbprop")
}

fn quick_config(dir: &std::path::Path) -> String {
    let cfg = ExperimentConfig {
        n: 200,
        batch: 32,
        epochs: 300,
        mse_target: 1.0,
        ..ExperimentConfig::default()
    };
    let path = dir.join("cfg.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn train_and_sweep_verbs_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let cfg = quick_config(dir.path());
    assert!(dbprop(&["train-sine", "--config", &cfg, "--out", &p("m.json")]).status.success());

    let out = dbprop(&["sweep-input", "--ckpt", &p("m.json"), "--from", "-1", "--to", "1", "--points", "11", "--out", &p("in.csv")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(p("in.csv")).unwrap();
    assert!(text.starts_with("x0,x_L,s,R_cdb\n"));
    assert_eq!(text.lines().count(), 12);
    assert!(!text.contains('\r'));

    let out = dbprop(&[
        "sweep-param", "--ckpt", &p("m.json"), "--param", "layer2.b[1]", "--penalty", "cdb", "--points", "5", "--out",
        &p("b.csv"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(p("b.csv")).unwrap().starts_with("value,s,R,dR\n"));
}

#[test]
fn reports_print_json_to_stdout() {
    let out = dbprop(&["opcount-report"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["all_match"], true);

    let out = dbprop(&["gradcheck", "--seed", "2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 12);
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json").to_string_lossy().into_owned();
    let csv = dir.path().join("x.csv").to_string_lossy().into_owned();
    assert!(!dbprop(&[]).status.success());
    assert!(!dbprop(&["no-such-verb"]).status.success());
    assert!(!dbprop(&["sweep-input", "--ckpt", &missing, "--out", &csv]).status.success());

    let cfg = quick_config(dir.path());
    let m = dir.path().join("m.json").to_string_lossy().into_owned();
    assert!(dbprop(&["train-sine", "--config", &cfg, "--out", &m]).status.success());
    let bad_param = dbprop(&["sweep-param", "--ckpt", &m, "--param", "layer9.w[0][0]", "--out", &csv]);
    assert!(!bad_param.status.success());
    assert!(String::from_utf8_lossy(&bad_param.stderr).starts_with("error:"));
    assert!(!dbprop(&["sweep-param", "--ckpt", &m, "--penalty", "spectral", "--out", &csv]).status.success());

    fs::write(dir.path().join("bad.json"), r#"{"epochs": 0, "bogus": 1}"#).unwrap();
    let bad_cfg = dir.path().join("bad.json").to_string_lossy().into_owned();
    assert!(!dbprop(&["train-sine", "--config", &bad_cfg, "--out", &m]).status.success());
}

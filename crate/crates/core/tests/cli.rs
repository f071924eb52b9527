use std::fs;
use std::process::Command;

use mlpeq::bench::{read_complexity_csv, COMPLEXITY_CSV};

fn mlpeq() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mlpeq"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn complexity_verb_writes_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = mlpeq().args(["complexity", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("75960427.39"), "{stdout}");

    let rows = read_complexity_csv(dir.path().join(COMPLEXITY_CSV)).unwrap();
    assert!(rows.iter().all(|r| r.power_dbm.is_none()));
    let fp32 = rows.iter().find(|r| r.sparsity == 0.0).unwrap();
    assert_eq!(fp32.bops, "75960427.39");
    assert_eq!(fp32.bytes, 212_036);
    let s60 = rows.iter().find(|r| (r.sparsity - 0.6).abs() < 1e-12).unwrap();
    assert_eq!(s60.bops, "16447962.81");
    assert!(s60.bytes < fp32.bytes / 4);
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"sparsities": [0.5], "dims": [84, 32, 2]}"#).unwrap();
    let out = mlpeq()
        .args(["complexity", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("r"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_complexity_csv(dir.path().join("r").join(COMPLEXITY_CSV)).unwrap();
    assert!(rows.iter().any(|r| r.sparsity == 0.5));
    assert!(!rows.iter().any(|r| (r.sparsity - 0.6).abs() < 1e-12));
}

#[test]
fn invalid_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"sparsities": [1.5]}"#).unwrap();
    let out = mlpeq()
        .args(["complexity", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let missing = mlpeq().args(["complexity", "--config", "/nonexistent/cfg.json"]).output().unwrap();
    assert!(!missing.status.success());
}

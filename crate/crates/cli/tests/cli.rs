use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatpoint"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn validate_passes_on_the_default_table() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["validate", "--workers", "2"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("validate.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 6);
    assert!(checks.iter().all(|c| c["passed"] == true));
}

#[test]
fn flat_exponent_two_is_a_configuration_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["validate", "--beta", "2"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("error.json")).unwrap()).unwrap();
    assert_eq!(err["kind"], "InvalidSpec");
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn open_boundary_fails_validation() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"table": {"beta": 4.0, "cap_radius": 16.0}}"#).unwrap();
    let out = run(&["validate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("validate.json")).unwrap()).unwrap();
    assert_eq!(report["checks"][0]["name"], "closure");
    assert_eq!(report["checks"][0]["passed"], false);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"sample": 10}"#).unwrap();
    let out = run(&["tail", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outputs_are_identical_across_runs_and_workers() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["tail", "--samples", "100000", "--seed", "7"];
    run(&[&args[..], &["--workers", "1"]].concat(), a.path());
    run(&[&args[..], &["--workers", "3"]].concat(), b.path());
    let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    assert_eq!(fa.len(), 3);
    assert_eq!(fa, fb);
}

#[test]
fn csv_dialect() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["holder", "--cells", "5,10", "--seed", "3"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("holder_stable.csv")).unwrap();
    let mut lines = text.split('\n');
    assert_eq!(lines.next(), Some("cell,theta_p,theta_q,distance,ratio"));
    assert!(!text.contains('\r'));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 5);
    let mantissa = row[1].split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17);
}

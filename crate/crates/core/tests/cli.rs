use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cvtele::analysis::ProtocolKind;
use cvtele::cli::{read_records_csv, read_records_json, summary_from_rows, Summary};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvtele"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const XP: &str = r#"{
    "protocol": "xp",
    "grid": {"n_points": 8, "spacing": 0.5},
    "input_state": {"kind": "gaussian_packet", "center": 2.0, "width": 0.3, "momentum": 1.0}
}"#;

const ENERGY: &str = r#"{
    "protocol": "energy",
    "grid": {"n_points": 16, "spacing": 0.5},
    "epsilon0": 4.0,
    "input_state": {"kind": "bump", "support": [0.5, 3.0]},
    "oversample": 2
}"#;

#[test]
fn check_reports_orthogonality() {
    let dir = tempfile::tempdir().unwrap();
    let xp = write_config(dir.path(), "xp.json", XP);
    let o = run(&["check", "--config", &xp, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("orthogonal = true"));

    let en = write_config(dir.path(), "en.json", ENERGY);
    let o = run(&["check", "--config", &en, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("orthogonal = false"));
    let s: Summary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(s.completeness_deviation.unwrap() < 1e-12);
}

#[test]
fn xp_teleport_summary_line_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "xp.json", XP);
    let out = dir.path().join("out");
    let o = run(&["teleport", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("min fidelity = 1.000000 over 64 outcomes"), "{}", stdout(&o));

    let summary: Summary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let from_json = read_records_json(&out.join("records.json")).unwrap();
    let from_csv = read_records_csv(&out.join("records.csv")).unwrap();
    assert_eq!(from_json, from_csv);
    assert_eq!(from_json.len(), 64);
    let again = summary_from_rows(ProtocolKind::Xp, summary.completeness_deviation, &from_csv);
    assert_eq!(again, summary);
}

#[test]
fn energy_teleport_writes_accepted_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "en.json", ENERGY);
    let o = run(&["teleport", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let rows = read_records_json(&dir.path().join("records.json")).unwrap();
    assert_eq!(rows.len(), 2 * 16 * 16);
    assert!(rows.iter().any(|r| r.accepted));
    for r in rows.iter().filter(|r| r.accepted) {
        assert!(r.fidelity.unwrap() > 1.0 - 1e-9);
        assert!(!r.clipped);
    }
    let summary: Summary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.protocol, ProtocolKind::Energy);
    assert!(summary.flatness_deviation.unwrap() < 1e-10);
}

#[test]
fn sweep_writes_one_row_per_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let text = XP.replace(
        "\"protocol\": \"xp\",",
        "\"protocol\": \"xp\", \"epr\": {\"ideal\": false, \"sigma\": 0.1, \"envelope\": 8.0}, \"sweep_sigmas\": [1.0, 0.5, 0.05],",
    );
    let cfg = write_config(dir.path(), "s.json", &text);
    let o = run(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("sigma,mean_fidelity"));
}

#[test]
fn sampling_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "xp.json", &XP.replace("\"protocol\"", "\"sample_count\": 50, \"protocol\""));
    let draw = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = run(&["sample", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success(), "{o:?}");
        fs::read_to_string(out.join("samples.csv")).unwrap()
    };
    let a = draw("5", "a");
    assert_eq!(a, draw("5", "b"));
    assert_ne!(a, draw("6", "c"));
    assert_eq!(a.lines().count(), 51);
}

#[test]
fn oracle_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.json", r#"{"protocol": "qubit", "seed": 3}"#);
    let o = run(&["oracle", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("states = 20"));
}

#[test]
fn outputs_allow_list_limits_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let text = XP.replace("\"protocol\"", "\"outputs\": [\"summary.json\"], \"protocol\"");
    let cfg = write_config(dir.path(), "xp.json", &text);
    let out = dir.path().join("o");
    assert!(run(&["teleport", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert!(out.join("summary.json").exists());
    assert!(!out.join("records.json").exists());
    assert!(!out.join("records.csv").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &XP.replace("\"grid\"", "\"gird\""));
    let o = run(&["teleport", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gird"));

    let cfg = write_config(dir.path(), "span.json", &ENERGY.replace("\"epsilon0\": 4.0", "\"epsilon0\": 6.0"));
    let o = run(&["check", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon0 + e_max"));

    assert_eq!(run(&["teleport"]).status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

use orthodeg::harness::{preset, read_energy_csv, read_trace_csv, ExperimentConfig, RunReport};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orthodeg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join(format!("{}.json", cfg.name));
    std::fs::write(&path, cfg.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn presets_are_listed_and_printed_as_loadable_json() {
    let out = cli(&["presets"]);
    assert_eq!(code(&out), 0);
    let listing = String::from_utf8(out.stdout).unwrap();
    assert!(listing.contains("heat-ms") && listing.contains("degenerate-steady"));

    let out = cli(&["presets", "--show", "random-bump"]);
    assert_eq!(code(&out), 0);
    let cfg = ExperimentConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, preset("random-bump").unwrap());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = dir.path().to_string_lossy().into_owned();

    let r = cli(&["solve", "--preset", "no-such-preset", "--out", &out]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).starts_with("error:"));

    let mut cfg = preset("heat-ms").unwrap();
    cfg.grid.h = -0.1;
    let path = write_config(dir.path(), &cfg);
    let r = cli(&["verify-energy", "--config", &path, "--out", &out]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("grid.h"));

    let bad = dir.path().join("typo.json");
    let text = preset("heat-ms").unwrap().to_json().replacen("\"seed\"", "\"sead\"", 1);
    std::fs::write(&bad, text).unwrap();
    let r = cli(&["solve", "--config", bad.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&r), 2);

    let r = cli(&["solve", "--out", &out]);
    assert_eq!(code(&r), 2);
    let r = cli(&["lemma-check", "--c", "-1", "--b", "2", "--alpha", "1", "--y0", "0.1"]);
    assert_eq!(code(&r), 2);
    assert!(!out_dir.exists());
}

#[test]
fn failed_verification_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out").to_string_lossy().into_owned();
    let mut cfg = preset("heat-ms").unwrap();
    cfg.constants.energy = Some(1e-9);
    let path = write_config(dir.path(), &cfg);
    let r = cli(&["verify-energy", "--config", &path, "--out", &out]);
    assert_eq!(code(&r), 1, "{}", String::from_utf8_lossy(&r.stdout));

    let r = cli(&["verify-energy", "--preset", "heat-ms", "--out", &out]);
    assert_eq!(code(&r), 0);
    let r = cli(&["lemma-check", "--c", "1", "--b", "4", "--alpha", "0.5", "--y0", "1e-3"]);
    assert_eq!(code(&r), 0);
}

#[test]
fn reports_are_reproducible_and_csv_matches_json() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for target in [&a, &b] {
        let r = cli(&["verify-linfty", "--preset", "heat-ms", "--seed", "3", "--out", target.to_str().unwrap()]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    }
    let first = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(first, std::fs::read(b.join("report.json")).unwrap());
    assert!(a.join("timings.json").exists());

    let report: RunReport = serde_json::from_slice(&first).unwrap();
    assert_eq!(report.config.seed, 3);
    assert_eq!(report.config_sha256, report.config.sha256());
    assert_eq!(read_trace_csv(&a.join("trace.csv")).unwrap(), report.trace.rows);
    assert_eq!(read_energy_csv(&a.join("energy.csv")).unwrap(), report.energy);
}

#[test]
fn solve_writes_final_state_and_convergence_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve");
    let r = cli(&["solve", "--preset", "heat-ms", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    let text = std::fs::read_to_string(out.join("final.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,x1,u"));
    assert_eq!(lines.count(), 81);

    let out = dir.path().join("mms");
    let r = cli(&["mms-convergence", "--preset", "heat-ms", "--levels", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stdout));
}

use std::fs;
use std::process::Command;

fn riscom() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riscom"))
}

#[test]
fn oracle_subcommand_passes() {
    let out = riscom().arg("oracle").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}

#[test]
fn run_writes_csv_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let out = riscom()
        .args(["run", "--experiment", "vs_L", "--values", "4,16", "--seeds", "2", "--schemes", "proposed,without_ris", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(results.starts_with("experiment,scheme,sweep_value,seed,rate_relaxed"));
    // header plus 2 values x 2 schemes x 2 seeds
    assert_eq!(results.lines().count(), 9);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    let svg = fs::read_to_string(dir.path().join("vs_L.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn unreachable_threshold_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = riscom()
        .args(["run", "--experiment", "vs_gamma", "--values", "1", "--seeds", "1", "--schemes", "rps", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("results.csv").exists());
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_experiment = riscom()
        .args(["run", "--experiment", "vs_nothing", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad_experiment.status.code(), Some(2));

    let bad_point = riscom()
        .args(["run", "--experiment", "vs_L", "--values", "4,5", "--seeds", "1", "--schemes", "without_ris", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad_point.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_point.stderr).contains("failed"));

    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"N": 0}"#).unwrap();
    let bad_config = riscom()
        .args(["run", "--experiment", "vs_L", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad_config.status.code(), Some(2));
}

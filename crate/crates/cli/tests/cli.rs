use std::path::Path;
use std::process::{Command, Output};

fn pepkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pepkit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn round2(cell: &str) -> String {
    format!("{:.2}", cell.parse::<f64>().unwrap())
}

#[test]
fn accelerated_bound_includes_both_points_and_reference() {
    let dir = tempfile::tempdir().unwrap();
    let o = pepkit(&["bound", "--method", "fgm", "--n", "20"], dir.path());
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 3);
    assert_eq!(r[0][2], "variant=main");
    assert_eq!(round2(&r[0][4]), "263.65");
    assert_eq!(round2(&r[1][4]), "259.65");
    assert_eq!(r[2][0], "nesterov");
    assert_eq!(round2(&r[2][4]), "220.50");
}

#[test]
fn heavy_ball_and_gradient_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = pepkit(
        &[
            "bound", "--method", "hbm", "--alpha", "1", "--beta", "0.5", "--n", "10",
        ],
        dir.path(),
    );
    assert_eq!(round2(&rows(&stdout(&o))[0][4]), "39.63");

    let o = pepkit(
        &[
            "bound", "--method", "gm", "--h", "1", "--n", "1", "--format", "json",
        ],
        dir.path(),
    );
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["inverse_factor"], 6.0);
    assert_eq!(v[0]["source"], "analytic");
}

#[test]
fn solver_failures_are_flagged_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = pepkit(
        &["bound", "--method", "gm", "--h", "2.5", "--n", "1,3"],
        dir.path(),
    );
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 2);
    assert_eq!(r[1][3], "");
    assert_ne!(r[1][6], "optimal");
}

#[test]
fn schedule_files_as_methods() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.json"),
        r#"{"n": 2, "rows": [[1.0], [0.0, 1.0]]}"#,
    )
    .unwrap();
    let o = pepkit(
        &["bound", "--method", "file:s.json", "--n", "1,2,3"],
        dir.path(),
    );
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(round2(&r[0][4]), "6.00");
    assert_eq!(round2(&r[1][4]), "10.00");
    assert_eq!(r[2][4], "");

    std::fs::write(dir.path().join("bad.json"), r#"{"n": 2, "rows": [[1.0]]}"#).unwrap();
    let o = pepkit(&["bound", "--method", "file:bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn optimize_writes_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let o = pepkit(
        &[
            "optimize",
            "--n",
            "4,10",
            "--render",
            "--schedule-dir",
            "out",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(round2(&r[0][2]), "39.09");
    assert_eq!(round2(&r[1][2]), "159.07");
    assert!(r.iter().all(|row| row[6] == "pass"));
    let saved = std::fs::read_to_string(dir.path().join("out/optimized_n4.json")).unwrap();
    let s = pepkit::schedule::StepSchedule::from_json_str(&saved).unwrap();
    assert_eq!(s.n(), 4);
    let rendered = String::from_utf8(o.stderr).unwrap();
    assert!(rendered.contains("x_1 <- x_0 - 1.6180/L f'(x_0)"));
}

#[test]
fn verify_suites_pass() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["gradient", "appendix", "fgm-equiv", "cocoercivity"] {
        let o = pepkit(
            &["verify", "--suite", suite, "--out", "report.json"],
            dir.path(),
        );
        assert!(o.status.success(), "{suite}: {}", stdout(&o));
        assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert!(report.as_array().unwrap().iter().all(|c| c["pass"] == true));
    }
}

#[test]
fn tables_are_deterministic_and_round_to_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["table", "--kind", "momentum", "--n", "1,2,3,4,5,10,20,40"];
    let a = pepkit(&[&args[..], &["--out", "a.csv"]].concat(), dir.path());
    let b = pepkit(&[&args[..], &["--out", "b.csv"]].concat(), dir.path());
    assert!(a.status.success() && b.status.success());
    let ta = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(
        ta,
        std::fs::read_to_string(dir.path().join("b.csv")).unwrap()
    );
    let hbm: Vec<String> = rows(&ta).iter().map(|r| round2(&r[1])).collect();
    assert_eq!(
        hbm,
        ["6.00", "7.99", "9.00", "12.35", "16.41", "39.63", "89.45", "188.99"]
    );
    let fgm: Vec<String> = rows(&ta).iter().map(|r| round2(&r[2])).collect();
    assert_eq!(
        fgm,
        ["6.00", "10.00", "15.13", "21.35", "28.66", "81.07", "263.65", "934.89"]
    );
}

#[test]
fn invalid_configurations_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!pepkit(&["bound", "--digits", "2"], dir.path())
        .status
        .success());
    assert!(!pepkit(&["bound", "--digits", "18"], dir.path())
        .status
        .success());
    assert!(!pepkit(&["bound", "--n", "0"], dir.path()).status.success());
    assert!(!pepkit(&["bound", "--method", "sgd"], dir.path())
        .status
        .success());
    assert!(!pepkit(&["bound", "--tol", "0"], dir.path())
        .status
        .success());
}

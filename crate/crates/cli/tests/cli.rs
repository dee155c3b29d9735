use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irs-relay"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn csv_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn sweep_writes_csv_and_reports_crossover() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&["--m-grid", "50,200,500,1000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&out);
    assert!(lines[0].starts_with("deployment,M,rho,tau_db,trial_count,rate_SR"));
    assert_eq!(lines.len(), 1 + 5 * 4);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("crossover rho=0.25"), "{err}");
}

#[test]
fn rician_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = run(&[
            "--report", "rician", "--deployment", "near-r,multi", "--m-grid", "64",
            "--tau-db", "0,10", "--trials", "50", "--seed", "42", "--out", p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(csv_lines(&a).len(), 1 + 2 * 2);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# reference link at 20 dBm\npower_dbm = 20\ndeployments = near-r\nm_grid = 10, 20\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "--strategy", "ascent"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.starts_with("near-r,")));
}

#[test]
fn scaling_report_prints_slopes() {
    let o = run(&["--report", "scaling"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("quantity,slope,expected,tolerance,pass"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 5);
}

#[test]
fn bad_configuration_exits_with_two() {
    for args in [
        &["--m-grid", "100,50"][..],
        &["--deployment", "near-x"],
        &["--rho", "0.7"],
        &["--trials", "0"],
        &["--config", "/nonexistent/file.cfg"],
        &["--report", "bogus"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let o = run(&["--report", "scaling", "--out", "/nonexistent/dir/out.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/dir/out.csv"));
}

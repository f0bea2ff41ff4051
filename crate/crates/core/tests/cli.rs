use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fpsir(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpsir"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn unknown_preset_is_a_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpsir(&["run", "nosuchpreset"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=unknown_preset"), "{err}");
    assert!(err.contains("unknown preset"), "{err}");
}

#[test]
fn bad_flags_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpsir(&["validate-mc", "uncontrolled", "--paths", "lots"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = fpsir(&["run", "uncontrolled", "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error kind=io"));
}

#[test]
fn uncontrolled_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpsir(&["run", "uncontrolled", "--out", "res", "--snapshots", "0,5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let res = dir.path().join("res");
    assert_eq!(header(&res.join("controls.csv")), "t,alpha,v,eta");
    assert_eq!(header(&res.join("dynamics.csv")), "t,S,I,R");
    assert_eq!(header(&res.join("density_t0.00.csv")), "x1,x2,f");
    assert_eq!(header(&res.join("density_t5.00.csv")), "x1,x2,f");
    assert!(!res.join("trace.csv").exists());
    let summary = fs::read_to_string(res.join("summary.txt")).unwrap();
    assert!(summary.contains("status=not_optimized"));
    assert_eq!(fs::read_to_string(res.join("controls.csv")).unwrap().lines().count(), 82);
    assert_eq!(fs::read_to_string(res.join("density_t5.00.csv")).unwrap().lines().count(), 41 * 41 + 1);
}

#[test]
fn scenario_run_writes_default_snapshots_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpsir(&["run", "scenario1", "--out", "s1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("status=converged_tau"));
    let res = dir.path().join("s1");
    for t in ["0.00", "1.25", "2.50", "3.75", "5.00", "10.00"] {
        assert!(res.join(format!("density_t{t}.csv")).exists(), "{t}");
    }
    assert_eq!(header(&res.join("trace.csv")), "iter,J,tau,eps,accepted,retries");
    let summary = fs::read_to_string(res.join("summary.txt")).unwrap();
    for key in ["J=", "control_cost=", "running_cost=", "terminal_cost="] {
        assert!(summary.contains(key), "{key}");
    }
}

#[test]
fn config_file_runs_like_a_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("variant.cfg");
    fs::write(&cfg, "# uncontrolled, shorter horizon\nbase = uncontrolled\ngrid.t_final = 5.0\ngrid.nt = 41\n").unwrap();
    let o = fpsir(&["run", cfg.to_str().unwrap(), "--out", "v", "--snapshots", "5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.path().join("v/controls.csv")).unwrap().lines().count(),
        42
    );

    fs::write(&cfg, "base = scenario1\nbeta 3\n").unwrap();
    let o = fpsir(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn validate_mc_prints_distance() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpsir(&["validate-mc", "uncontrolled", "--paths", "2000", "--time", "5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let l1: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("l1_distance="))
        .expect("l1 line")
        .parse()
        .unwrap();
    assert!((0.0..=2.0).contains(&l1));
    assert!(out.contains("mc_stderr_i="));
}

#[test]
fn baseline_reports_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpsir(&["baseline", "scenario2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let t: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("ode_peak_time="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((2.5..=3.5).contains(&t));
}

#[test]
fn check_battery_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpsir(&["check"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

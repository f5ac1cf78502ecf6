use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mdflow::diagnostics::CSV_HEADER;
use mdflow::grid::load_snapshot;

const SMALL: &str = "\
scenario.id = small
motion.kind = stretch
motion.a = \"0.2*sin(t)\"
grid.n_r = 16
physics.nu = 0.05
physics.T = 0.1
physics.dt = 0.005
initial.preset = offset_bump
output.snapshot_every = 10
";

fn mdflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdflow")).args(args).output().expect("binary runs")
}

fn run_config(dir: &Path, text: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, text).unwrap();
    let out = dir.join("out");
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    mdflow(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn passing_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(dir.path(), SMALL, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("[PASS] small L^r monotonicity"));

    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("small.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 21);

    let (omega, t) = load_snapshot(&out.join("small_000010.mdflow")).unwrap();
    assert_eq!((omega.grid().n_r(), omega.grid().n_theta()), (16, 32));
    assert!((t - 0.05).abs() < 1e-12);
}

#[test]
fn quiet_prints_only_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(dir.path(), SMALL, &["--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "small: exit 0");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(dir.path(), "grid.n_r = 3\nmotion.kind = spiral\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 1") && err.contains("line 2"), "{err}");

    let o = mdflow(&["--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = mdflow(&["--suite", "everything"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cfl_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("physics.dt = 0.005", "physics.dt = 0.1");
    let o = run_config(dir.path(), &text, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CFL"));
}

#[test]
fn forced_family_breaks_uniform_bound_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
scenario.id = forced
motion.kind = identity
grid.n_r = 16
physics.nu = 0.1, 0.05
physics.T = 0.2
physics.dt = 0.005
physics.forcing = \"5*x\"
initial.preset = bessel_mode
";
    let o = run_config(dir.path(), text, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("[FAIL] forced uniform L^r bound"));
    let out = dir.path().join("out");
    let report = fs::read_to_string(out.join("forced_family.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    assert!(out.join("forced_family.txt").exists());
}

#[test]
fn invariants_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdflow(&["--suite", "invariants", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("[FAIL]"));
}

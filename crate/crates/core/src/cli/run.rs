//! Executes a validated configuration and writes its artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use crate::diagnostics::{monotonicity_report, record, write_csv_header, write_csv_row, DiagnosticsRecord, R_SET};
use crate::error::{FlowError, Result};
use crate::grid::{save_snapshot, ScalarField};
use crate::harness::{run_family, FamilyOptions, FamilyReport, Scenario};
use crate::solver::{boundary_tangency, mollify_initial_with_metric, SolverState};

/// Process outcome, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Pass,
    InvariantFailure,
    ConfigError,
    NumericalFailure,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::InvariantFailure => 1,
            Status::ConfigError => 2,
            Status::NumericalFailure => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub id: String,
    pub status: Status,
    pub checks: Vec<CheckLine>,
    /// Numerical failure message, with scenario context.
    pub error: Option<String>,
    pub files: Vec<PathBuf>,
    /// Diagnostics per member (one entry for a single run).
    pub series: Vec<Vec<DiagnosticsRecord>>,
    /// Final vorticity per member; absent for a member that failed.
    pub final_omega: Vec<Option<ScalarField>>,
    pub max_tangency: Vec<f64>,
    pub family: Option<FamilyReport>,
}

impl RunOutcome {
    fn finish(mut self) -> Self {
        if self.error.is_some() {
            self.status = Status::NumericalFailure;
        } else if self.checks.iter().any(|c| !c.passed) {
            self.status = Status::InvariantFailure;
        }
        self
    }
}

/// Bound on the boundary normal component of the advection field.
pub fn tangency_bound(h: f64) -> f64 {
    5.0 * h * h
}

fn monotonicity_line(name: &str, series: &[DiagnosticsRecord]) -> CheckLine {
    let verdicts = monotonicity_report(series);
    let failed: Vec<String> = verdicts
        .iter()
        .filter_map(|v| {
            v.first_violation
                .as_ref()
                .map(|x| format!("r={} step {} ({:e} -> {:e})", v.r, x.step, x.before, x.after))
        })
        .collect();
    let detail = if failed.is_empty() {
        format!("{} steps, r in {:?}", series.len().saturating_sub(1), R_SET)
    } else {
        failed.join("; ")
    };
    CheckLine::new(format!("{name} L^r monotonicity"), failed.is_empty(), detail)
}

fn tangency_line(name: &str, max: f64, h: f64) -> CheckLine {
    let bound = tangency_bound(h);
    CheckLine::new(
        format!("{name} boundary tangency"),
        max < bound,
        format!("max |w.eta| = {max:.3e}, bound 5h^2 = {bound:.3e}"),
    )
}

fn snapshot_path(dir: &Path, stem: &str, step: usize) -> PathBuf {
    dir.join(format!("{stem}_{step:06}.mdflow"))
}

fn write_gnuplot(dir: &Path, stem: &str) -> Result<PathBuf> {
    let p = dir.join(format!("{stem}.gp"));
    let script = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset logscale y\nset xlabel 't'\n\
         plot for [c=2:5] '{stem}.csv' using 1:c with lines\npause -1\n"
    );
    fs::write(&p, script)?;
    Ok(p)
}

fn write_csv(dir: &Path, stem: &str, series: &[DiagnosticsRecord]) -> Result<PathBuf> {
    let p = dir.join(format!("{stem}.csv"));
    let mut w = BufWriter::new(fs::File::create(&p)?);
    write_csv_header(&mut w)?;
    for r in series {
        write_csv_row(&mut w, r)?;
    }
    w.flush()?;
    Ok(p)
}

/// Member file stem, e.g. `stretch_nu1e-3`.
pub fn member_stem(id: &str, nu: f64) -> String {
    format!("{id}_nu{nu:e}")
}

fn run_single(cfg: &RunConfig, sc: &Scenario, dir: &Path, out: &mut RunOutcome) -> Result<()> {
    let nu = cfg.nus[0];
    let omega = if cfg.mollify {
        let q = sc.motion.metric_at(sc.omega0.grid().point(0, 0), 0.0)?.q_up;
        mollify_initial_with_metric(&sc.omega0, nu, &q)?
    } else {
        sc.omega0.clone()
    };
    let mut state = SolverState::new(sc.motion.clone(), omega, nu, sc.forcing.clone())?;
    let h = state.grid().h();
    let mut series = vec![record(&state)?];
    let mut max_tan = boundary_tangency(&state);
    let every = cfg.output.snapshot_every;
    let steps = cfg.steps();
    let mut result = Ok(());
    if every > 0 {
        let p = snapshot_path(dir, &cfg.id, 0);
        save_snapshot(&p, &state.omega, state.t)?;
        out.files.push(p);
    }
    for n in 1..=steps {
        match state.step(&cfg.step).and_then(|s| {
            let r = record(&s)?;
            Ok((s, r))
        }) {
            Ok((s, r)) => {
                state = s;
                series.push(r);
                max_tan = max_tan.max(boundary_tangency(&state));
            }
            Err(e) => {
                result = Err(e);
                break;
            }
        }
        if every > 0 && (n % every == 0 || n == steps) {
            let p = snapshot_path(dir, &cfg.id, n);
            save_snapshot(&p, &state.omega, state.t)?;
            out.files.push(p);
        }
    }
    if cfg.output.diagnostics {
        out.files.push(write_csv(dir, &cfg.id, &series)?);
        out.files.push(write_gnuplot(dir, &cfg.id)?);
    }
    if cfg.checks.monotonicity {
        out.checks.push(monotonicity_line(&cfg.id, &series));
    }
    if cfg.checks.tangency {
        out.checks.push(tangency_line(&cfg.id, max_tan, h));
    }
    out.max_tangency.push(max_tan);
    out.final_omega.push(result.is_ok().then(|| state.omega.clone()));
    out.series.push(series);
    result.map_err(|e| FlowError::Argument(format!("scenario {} at t = {:.6}: {e}", cfg.id, state.t)))
}

fn run_family_cfg(cfg: &RunConfig, sc: &Scenario, dir: &Path, out: &mut RunOutcome) -> Result<()> {
    let opts = FamilyOptions {
        snapshot_every: cfg.output.snapshot_every,
        ..Default::default()
    };
    let report = run_family(sc, &cfg.nus, &opts)?;
    let h = sc.omega0.grid().h();
    for m in &report.members {
        let stem = member_stem(&cfg.id, m.nu);
        if cfg.output.diagnostics {
            out.files.push(write_csv(dir, &stem, &m.diagnostics)?);
            out.files.push(write_gnuplot(dir, &stem)?);
        }
        let steps = m.snapshots.len();
        for (k, (t, f)) in m.snapshots.iter().enumerate() {
            let step = if k + 1 == steps { cfg.steps() } else { k * cfg.output.snapshot_every };
            let p = snapshot_path(dir, &stem, step);
            save_snapshot(&p, f, *t)?;
            out.files.push(p);
        }
        let name = format!("{} nu={:e}", cfg.id, m.nu);
        if cfg.checks.monotonicity {
            out.checks.push(monotonicity_line(&name, &m.diagnostics));
        }
        if cfg.checks.tangency {
            out.checks.push(tangency_line(&name, m.max_tangency, h));
        }
        out.series.push(m.diagnostics.clone());
        out.final_omega.push(m.ok().then(|| m.final_omega.clone()).flatten());
        out.max_tangency.push(m.max_tangency);
    }
    let csv = dir.join(format!("{}_family.csv", cfg.id));
    fs::write(&csv, report.to_csv())?;
    let txt = dir.join(format!("{}_family.txt", cfg.id));
    fs::write(&txt, report.summary())?;
    out.files.extend([csv, txt]);

    if cfg.checks.family {
        let bounds = report.uniform_bounds();
        let worst: Vec<String> = (0..4)
            .map(|r| {
                let sup = report.members.iter().map(|m| m.lr_sup[r]).fold(0.0, f64::max);
                format!("r={}: {sup:.6e} <= {:.6e}", R_SET[r], report.omega0_norms[r])
            })
            .collect();
        out.checks.push(CheckLine::new(
            format!("{} uniform L^r bound", cfg.id),
            bounds.iter().all(|&b| b),
            worst.join(", "),
        ));
        let c: Vec<String> = report
            .cauchy_l2
            .iter()
            .map(|c| c.map_or("n/a".into(), |c| format!("{c:.4e}")))
            .collect();
        out.checks.push(CheckLine::new(
            format!("{} Cauchy differences decreasing", cfg.id),
            report.cauchy_decreasing(),
            c.join(" > "),
        ));
        match report.residual_fit() {
            Ok(f) => out.checks.push(CheckLine::new(
                format!("{} weak residual linear in nu", cfg.id),
                f.a > 0.0 && f.b > 0.0 && f.max_rel_error < 0.2,
                format!("A = {:.4e}, B = {:.4e}, max relative misfit {:.3}", f.a, f.b, f.max_rel_error),
            )),
            Err(e) => out.checks.push(CheckLine::new(
                format!("{} weak residual linear in nu", cfg.id),
                false,
                e.to_string(),
            )),
        }
    }
    let failures: Vec<String> = report
        .members
        .iter()
        .filter_map(|m| m.failure.as_ref().map(|f| format!("scenario {} nu={:e}: {f}", cfg.id, m.nu)))
        .collect();
    out.family = Some(report);
    if failures.is_empty() {
        Ok(())
    } else {
        Err(FlowError::Argument(failures.join("; ")))
    }
}

/// Runs `cfg`, writing artifacts below `dir` (created if missing).
///
/// Numerical failures are reported in the outcome, not as `Err`; `Err` is
/// reserved for I/O problems and unreadable initial snapshots.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(dir)?;
    let mut out = RunOutcome {
        id: cfg.id.clone(),
        status: Status::Pass,
        checks: Vec::new(),
        error: None,
        files: Vec::new(),
        series: Vec::new(),
        final_omega: Vec::new(),
        max_tangency: Vec::new(),
        family: None,
    };
    let sc = cfg.scenario()?;
    let r = if cfg.is_family() {
        run_family_cfg(cfg, &sc, dir, &mut out)
    } else {
        run_single(cfg, &sc, dir, &mut out)
    };
    if let Err(e) = r {
        if matches!(e, FlowError::Io(_)) {
            return Err(e);
        }
        out.error = Some(match e {
            FlowError::Argument(m) => m,
            other => format!("scenario {}: {other}", cfg.id),
        });
    }
    Ok(out.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    fn cfg(extra: &str) -> RunConfig {
        parse_config(&format!(
            "scenario.id = t\nmotion.kind = identity\ninitial.preset = bessel_mode\ngrid.n_r = 16\nphysics.T = 0.1\nphysics.dt = 0.01\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn bessel_run_passes_with_monotone_l2() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg("physics.nu = 0.01\n"), dir.path()).unwrap();
        assert_eq!(out.status, Status::Pass, "{:?}", out.checks);
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        let l2: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
        assert_eq!(l2.len(), 11);
        assert!(l2.windows(2).all(|w| w[1] < w[0]));
        assert!(dir.path().join("t.gp").exists());
    }

    #[test]
    fn huge_dt_is_a_numerical_failure() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse_config(
            "motion.kind = stretch\nmotion.a = 0.3*sin(t)\ninitial.preset = offset_bump\ngrid.n_r = 16\nphysics.nu = 0\nphysics.T = 1\nphysics.dt = 0.5\n",
        )
        .unwrap();
        let out = run(&c, dir.path()).unwrap();
        assert_eq!(out.status, Status::NumericalFailure);
        assert_eq!(out.status.code(), 3);
        assert!(out.error.as_deref().unwrap().contains("CFL"), "{:?}", out.error);
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let c = cfg("physics.nu = 1e-2, 1e-3\noutput.snapshot_every = 5\n");
        let oa = run(&c, a.path()).unwrap();
        run(&c, b.path()).unwrap();
        assert!(oa.files.len() > 4);
        for f in &oa.files {
            let name = f.file_name().unwrap();
            assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
        }
        assert!(a.path().join("t_nu1e-2_000010.mdflow").exists());
    }

    #[test]
    fn snapshots_follow_cadence() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg("physics.nu = 0\noutput.snapshot_every = 4\noutput.diagnostics = false\n"), dir.path()).unwrap();
        let names: Vec<String> = out.files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, ["t_000000.mdflow", "t_000004.mdflow", "t_000008.mdflow", "t_000010.mdflow"]);
        let (f, t) = crate::grid::load_snapshot(&out.files[3]).unwrap();
        assert!((t - 0.1).abs() < 1e-12);
        assert_eq!(&f, out.final_omega[0].as_ref().unwrap());
    }
}

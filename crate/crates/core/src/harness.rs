//! Vanishing-viscosity families.
//!
//! Every member starts from the same `omega0`, mollified by its own `nu`,
//! and all members share one grid and one time step. Members advance in
//! lockstep so that the space-time distances between neighbouring members
//! accumulate on the fly instead of from stored trajectories.

use std::fmt::Write as _;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::diagnostics::{record, DiagnosticsRecord, TestFunction, WeakAccumulator, WeakResidual, R_SET};
use crate::error::{FlowError, Result};
use crate::grid::{integrate, ScalarField, VectorField};
use crate::motion::{MotionSpec, TimeFn};
use crate::solver::{boundary_tangency, mollify_initial_with_metric, Forcing, SolverState, StepConfig};

/// A run description shared by single runs and families.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub motion: MotionSpec,
    pub omega0: ScalarField,
    pub forcing: Forcing,
    pub horizon: f64,
    pub step: StepConfig,
}

impl Scenario {
    pub fn steps(&self) -> Result<usize> {
        let n = self.horizon / self.step.dt;
        if !(self.step.dt > 0.0 && n.is_finite()) {
            return Err(FlowError::Argument(format!("invalid time step {}", self.step.dt)));
        }
        let k = n.round();
        if (n - k).abs() > 1e-6 * n.max(1.0) || k < 1.0 {
            return Err(FlowError::Argument(format!(
                "final time {} is not a whole number of steps of {}",
                self.horizon, self.step.dt
            )));
        }
        Ok(k as usize)
    }

    /// Mollified initial state for viscosity `nu`.
    pub fn initial_state(&self, nu: f64) -> Result<SolverState> {
        let q = self.motion.metric_at(self.omega0.grid().point(0, 0), 0.0)?.q_up;
        let w = mollify_initial_with_metric(&self.omega0, nu, &q)?;
        SolverState::new(self.motion.clone(), w, nu, self.forcing.clone())
    }
}

#[derive(Debug, Clone)]
pub struct FamilyOptions {
    pub test: [f64; 3],
    /// Store the vorticity every this many steps (0 disables).
    pub snapshot_every: usize,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        Self {
            test: [1.0, 0.3, 0.1],
            snapshot_every: 0,
        }
    }
}

/// Per-member summary.
#[derive(Debug, Clone)]
pub struct MemberReport {
    pub nu: f64,
    /// `sup_t |omega|_{L^r}` over `R_SET`.
    pub lr_sup: [f64; 4],
    /// Sup over time of `|grad v|_{L^r}` for the finite exponents.
    pub grad_v_sup: [f64; 3],
    /// Inviscid weak-form defect of this member's trajectory.
    pub weak_residual: Option<WeakResidual>,
    pub max_tangency: f64,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<(f64, ScalarField)>,
    /// Vorticity at the last completed step.
    pub final_omega: Option<ScalarField>,
    pub failure: Option<String>,
}

impl MemberReport {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Least-squares fit `|res| = a nu + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualFit {
    pub a: f64,
    pub b: f64,
    /// Largest `|fit - |res|| / |res|` over the members.
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct FamilyReport {
    pub scenario: String,
    pub nus: Vec<f64>,
    pub members: Vec<MemberReport>,
    /// `|omega0|_{L^r}` of the unmollified data.
    pub omega0_norms: [f64; 4],
    /// `|v_k - v_{k+1}|` in `L^2(0, T; L^2(disk))`; `None` if either member failed.
    pub cauchy_l2: Vec<Option<f64>>,
}

/// Slack allowed above `|omega0|_{L^r}`.
pub const UNIFORM_BOUND_SLACK: f64 = 1e-6;

impl FamilyReport {
    pub fn complete(&self) -> bool {
        self.members.iter().all(MemberReport::ok)
    }

    /// Per `r`, whether every member stays below `|omega0|_r + slack`.
    pub fn uniform_bounds(&self) -> [bool; 4] {
        let mut out = [true; 4];
        for m in &self.members {
            for r in 0..4 {
                out[r] &= m.lr_sup[r] <= self.omega0_norms[r] + UNIFORM_BOUND_SLACK;
            }
        }
        out
    }

    pub fn cauchy_decreasing(&self) -> bool {
        let v: Option<Vec<f64>> = self.cauchy_l2.iter().copied().collect();
        v.is_some_and(|v| v.windows(2).all(|w| w[1] < w[0]))
    }

    pub fn residual_fit(&self) -> Result<ResidualFit> {
        let pts: Vec<(f64, f64)> = self
            .members
            .iter()
            .filter_map(|m| m.weak_residual.map(|w| (m.nu, w.value())))
            .collect();
        fit_linear(&pts)
    }

    /// Table with one row per member.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("nu,lr1p5_sup,lr2_sup,lr4_sup,linf_sup,gv1p5_sup,gv2_sup,gv4_sup,cauchy_l2,weak_residual,route_gap,max_tangency,status\n");
        for (k, m) in self.members.iter().enumerate() {
            let _ = write!(s, "{:e}", m.nu);
            for v in m.lr_sup.iter().chain(&m.grad_v_sup) {
                let _ = write!(s, ",{v:.15e}");
            }
            match self.cauchy_l2.get(k).copied().flatten() {
                Some(c) => write!(s, ",{c:.15e}"),
                None => write!(s, ","),
            }
            .ok();
            match m.weak_residual {
                Some(w) => write!(s, ",{:.15e},{:.15e}", w.value(), w.route_gap()),
                None => write!(s, ",,"),
            }
            .ok();
            let status = m.failure.as_deref().map_or("ok".to_string(), |f| f.replace([',', '\n'], ";"));
            let _ = writeln!(s, ",{:.15e},{status}", m.max_tangency);
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "family {} with {} members", self.scenario, self.members.len());
        let bounds = self.uniform_bounds();
        for (r, ok) in R_SET.iter().zip(bounds) {
            let worst = self.members.iter().map(|m| m.lr_sup[r_index(*r)]).fold(0.0, f64::max);
            let _ = writeln!(
                s,
                "  L^{r} sup {:.6e} vs |omega0| {:.6e}: {}",
                worst,
                self.omega0_norms[r_index(*r)],
                if ok { "bounded" } else { "EXCEEDED" }
            );
        }
        for (k, r) in R_SET[..3].iter().enumerate() {
            let worst = self.members.iter().map(|m| m.grad_v_sup[k]).fold(0.0, f64::max);
            let _ = writeln!(s, "  |grad v|_{r} sup {worst:.6e}");
        }
        for (k, c) in self.cauchy_l2.iter().enumerate() {
            let (a, b) = (self.nus[k], self.nus[k + 1]);
            match c {
                Some(c) => writeln!(s, "  cauchy nu={a:e}/{b:e}: {c:.6e}"),
                None => writeln!(s, "  cauchy nu={a:e}/{b:e}: unavailable"),
            }
            .ok();
        }
        if !self.cauchy_l2.is_empty() {
            let _ = writeln!(s, "  cauchy decreasing: {}", self.cauchy_decreasing());
        }
        match self.residual_fit() {
            Ok(f) => writeln!(
                s,
                "  weak residual fit |res| = {:.4e} nu + {:.4e}, max relative misfit {:.3}",
                f.a, f.b, f.max_rel_error
            ),
            Err(e) => writeln!(s, "  weak residual fit unavailable: {e}"),
        }
        .ok();
        for m in &self.members {
            if let Some(f) = &m.failure {
                let _ = writeln!(s, "  member nu={:e} FAILED: {f}", m.nu);
            }
        }
        s
    }
}

fn r_index(r: f64) -> usize {
    R_SET.iter().position(|&x| x == r).unwrap_or(0)
}

/// Fits `y = a x + b` minimising relative errors (weights `1 / y^2`), so
/// geometrically spaced points count equally; needs two distinct abscissae.
pub fn fit_linear(pts: &[(f64, f64)]) -> Result<ResidualFit> {
    if pts.len() < 2 {
        return Err(FlowError::Argument("fit needs at least two points".into()));
    }
    if pts.iter().any(|p| p.1 == 0.0 || !p.1.is_finite()) {
        return Err(FlowError::Argument("relative fit needs nonzero finite values".into()));
    }
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in pts {
        let w = 1.0 / (y * y);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    if !(det.abs() > 1e-300) || pts.windows(2).all(|p| p[0].0 == p[1].0) {
        return Err(FlowError::Argument("fit needs distinct abscissae".into()));
    }
    let a = (sw * sxy - sx * sy) / det;
    let b = (sxx * sy - sx * sxy) / det;
    let max_rel_error = pts
        .iter()
        .map(|&(x, y)| ((a * x + b - y) / y).abs())
        .fold(0.0, f64::max);
    Ok(ResidualFit { a, b, max_rel_error })
}

fn lp_norms(w: &ScalarField) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (o, &r) in out.iter_mut().zip(R_SET.iter()) {
        *o = integrate(w, r)?;
    }
    Ok(out)
}

fn velocity_gap2(a: &VectorField, b: &VectorField, area: impl Fn(usize) -> f64, nt: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..a.x.len() {
        let d = (a.x[k] - b.x[k]).powi(2) + (a.y[k] - b.y[k]).powi(2);
        s += d * area(k / nt);
    }
    s
}

struct Member {
    state: SolverState,
    report: MemberReport,
    weak: Option<WeakAccumulator>,
}

impl Member {
    fn fail(&mut self, e: FlowError) {
        self.report.failure = Some(e.to_string());
        self.weak = None;
    }

    fn observe(&mut self, snapshot: bool) -> Result<()> {
        let rec = record(&self.state)?;
        for r in 0..4 {
            self.report.lr_sup[r] = self.report.lr_sup[r].max(rec.lr_norms[r]);
            if r < 3 {
                self.report.grad_v_sup[r] = self.report.grad_v_sup[r].max(rec.grad_v_norms[r]);
            }
        }
        self.report.max_tangency = self.report.max_tangency.max(boundary_tangency(&self.state));
        self.report.diagnostics.push(rec);
        if let Some(w) = &mut self.weak {
            w.push(&self.state)?;
        }
        if snapshot {
            self.report.snapshots.push((self.state.t, self.state.omega.clone()));
        }
        Ok(())
    }

    fn advance(&mut self, cfg: &StepConfig, snapshot: bool) {
        if !self.report.ok() {
            return;
        }
        let r = self.state.step(cfg).and_then(|s| {
            self.state = s;
            self.observe(snapshot)
        });
        if let Err(e) = r {
            self.fail(e);
        }
    }
}

/// Runs one member per viscosity, strictly decreasing and positive.
///
/// Member failures are annotated in the report rather than aborting the
/// family; only invalid arguments return an error.
pub fn run_family(scenario: &Scenario, nus: &[f64], opts: &FamilyOptions) -> Result<FamilyReport> {
    if nus.is_empty() {
        return Err(FlowError::Argument("empty viscosity list".into()));
    }
    if nus.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(FlowError::Argument("family viscosities must be positive".into()));
    }
    if nus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(FlowError::Argument("family viscosities must be strictly decreasing".into()));
    }
    let steps = scenario.steps()?;
    let g = scenario.omega0.grid();
    let horizon = scenario.horizon;
    let profile = TimeFn::parse(&format!("cos(pi*t/(2*{horizon:?}))"))
        .map_err(|e| FlowError::Argument(e.to_string()))?;
    let phi = TestFunction::polynomial(opts.test);
    // inviscid weak form, initial pairing against the unmollified data
    let reference = SolverState::new(scenario.motion.clone(), scenario.omega0.clone(), 0.0, scenario.forcing.clone())?;

    let mut members: Vec<Member> = nus
        .iter()
        .map(|&nu| {
            let report = MemberReport {
                nu,
                lr_sup: [0.0; 4],
                grad_v_sup: [0.0; 3],
                weak_residual: None,
                max_tangency: 0.0,
                diagnostics: Vec::with_capacity(steps + 1),
                snapshots: Vec::new(),
                final_omega: None,
                failure: None,
            };
            let weak = WeakAccumulator::new(&phi, profile.clone(), horizon, 0.0, &reference);
            let mut m = match (scenario.initial_state(nu), weak) {
                (Ok(state), Ok(w)) => Member {
                    state,
                    report,
                    weak: Some(w),
                },
                (Err(e), _) | (_, Err(e)) => {
                    let mut m = Member {
                        state: reference.clone(),
                        report,
                        weak: None,
                    };
                    m.fail(e);
                    return m;
                }
            };
            if let Err(e) = m.observe(opts.snapshot_every > 0) {
                m.fail(e);
            }
            m
        })
        .collect();

    let nt = g.n_theta();
    let pairs = nus.len() - 1;
    let mut gap_prev: Vec<f64> = (0..pairs)
        .map(|k| velocity_gap2(&members[k].state.v, &members[k + 1].state.v, |i| g.area(i), nt))
        .collect();
    let mut cauchy2 = vec![0.0; pairs];
    let dt = scenario.step.dt;

    for n in 1..=steps {
        let snap = opts.snapshot_every > 0 && (n % opts.snapshot_every == 0 || n == steps);
        #[cfg(feature = "parallel")]
        members.par_iter_mut().for_each(|m| m.advance(&scenario.step, snap));
        #[cfg(not(feature = "parallel"))]
        members.iter_mut().for_each(|m| m.advance(&scenario.step, snap));

        for k in 0..pairs {
            let gap = velocity_gap2(&members[k].state.v, &members[k + 1].state.v, |i| g.area(i), nt);
            cauchy2[k] += 0.5 * dt * (gap_prev[k] + gap);
            gap_prev[k] = gap;
        }
    }

    let mut out = Vec::with_capacity(members.len());
    for mut m in members {
        m.report.final_omega = Some(m.state.omega);
        if let Some(w) = m.weak.take() {
            match w.finish() {
                Ok(r) => m.report.weak_residual = Some(r),
                Err(e) => m.report.failure = Some(e.to_string()),
            }
        }
        out.push(m.report);
    }
    let cauchy_l2 = (0..pairs)
        .map(|k| (out[k].ok() && out[k + 1].ok()).then(|| cauchy2[k].sqrt()))
        .collect();
    Ok(FamilyReport {
        scenario: scenario.id.clone(),
        nus: nus.to_vec(),
        members: out,
        omega0_norms: lp_norms(&scenario.omega0)?,
        cauchy_l2,
    })
}

/// Smallest-viscosity vorticity sequence with a per-time error bar.
#[derive(Debug, Clone)]
pub struct LimitCandidate {
    pub nu: f64,
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
    /// `L^2` distance to the second-smallest member at each time.
    pub error_bar: Vec<f64>,
}

/// Designates the smallest-`nu` member as the limit candidate; needs
/// snapshots from at least two members.
pub fn richardson_limit(report: &FamilyReport) -> Result<LimitCandidate> {
    let n = report.members.len();
    if n < 2 {
        return Err(FlowError::Argument("limit candidate needs at least two family members".into()));
    }
    let (best, next) = (&report.members[n - 1], &report.members[n - 2]);
    if !best.ok() || !next.ok() {
        return Err(FlowError::Argument("limit candidate needs the two smallest members to succeed".into()));
    }
    if best.snapshots.is_empty() || best.snapshots.len() != next.snapshots.len() {
        return Err(FlowError::Argument("limit candidate needs matching snapshots; enable snapshot_every".into()));
    }
    let mut times = Vec::new();
    let mut fields = Vec::new();
    let mut error_bar = Vec::new();
    for ((t, a), (_, b)) in best.snapshots.iter().zip(&next.snapshots) {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        times.push(*t);
        error_bar.push(integrate(&d, 2.0)?);
        fields.push(a.clone());
    }
    Ok(LimitCandidate {
        nu: best.nu,
        times,
        fields,
        error_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::solver::InitialPreset;

    fn radial(n: usize, horizon: f64, dt: f64) -> Scenario {
        let g = Grid::new(n, 2 * n).unwrap();
        Scenario {
            id: "radial".into(),
            motion: MotionSpec::identity(horizon),
            omega0: InitialPreset::RadialPoly { amplitude: 1.0 }.sample(g).unwrap(),
            forcing: Forcing::Potential,
            horizon,
            step: StepConfig::new(dt),
        }
    }

    #[test]
    fn fit_recovers_line() {
        let f = fit_linear(&[(1e-2, 3e-2 + 1e-5), (1e-3, 3e-3 + 1e-5), (1e-4, 3e-4 + 1e-5)]).unwrap();
        assert!((f.a - 3.0).abs() < 1e-12 && (f.b - 1e-5).abs() < 1e-14);
        assert!(f.max_rel_error < 1e-10);
        assert!(fit_linear(&[(1.0, 1.0)]).is_err());
        assert!(fit_linear(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn single_member_has_no_cauchy_entries() {
        let r = run_family(&radial(16, 0.1, 0.02), &[1e-2], &FamilyOptions::default()).unwrap();
        assert!(r.cauchy_l2.is_empty());
        assert!(r.complete());
        assert!(r.summary().contains("1 members"));
        assert!(richardson_limit(&r).is_err());
    }

    #[test]
    fn rejects_bad_viscosity_lists() {
        let s = radial(16, 0.1, 0.02);
        let o = FamilyOptions::default();
        assert!(run_family(&s, &[1e-3, 1e-2], &o).is_err());
        assert!(run_family(&s, &[1e-2, 0.0], &o).is_err());
        assert!(run_family(&s, &[], &o).is_err());
    }

    #[test]
    fn radial_family_is_cauchy_and_bounded() {
        let opts = FamilyOptions {
            snapshot_every: 5,
            ..Default::default()
        };
        let r = run_family(&radial(32, 0.5, 0.01), &[1e-2, 1e-3, 1e-4], &opts).unwrap();
        assert!(r.complete(), "{}", r.summary());
        assert!(r.uniform_bounds().iter().all(|&b| b), "{}", r.summary());
        assert!(r.cauchy_decreasing(), "{}", r.summary());
        let lim = richardson_limit(&r).unwrap();
        assert_eq!(lim.times.len(), lim.error_bar.len());
        // steady limit: the smallest member drifts from omega0 by diffusion
        // only, about nu (1 + T) |lap omega0| with |lap (1 - r^2)^2|_2 = 8.2
        let last = lim.fields.last().unwrap();
        let mut d = last.clone();
        d.axpy(-1.0, &radial(32, 0.5, 0.01).omega0);
        let dist = integrate(&d, 2.0).unwrap();
        assert!(dist < 1.5 * 1e-4 * 1.5 * 8.2, "{dist}");
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn identical_members_give_zero_error_bar() {
        let s = radial(16, 0.1, 0.02);
        let mut r = run_family(&s, &[1e-2, 1e-3], &FamilyOptions { snapshot_every: 1, ..Default::default() }).unwrap();
        r.members[0] = r.members[1].clone();
        let lim = richardson_limit(&r).unwrap();
        assert!(lim.error_bar.iter().all(|&e| e == 0.0));
    }
}

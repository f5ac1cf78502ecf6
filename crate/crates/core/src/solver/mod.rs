//! Vorticity transport on the reference disk.
//!
//! The pulled-back vorticity `omega(y, s) = omega_phys(Psi(y, s), s)` obeys
//!
//! ```text
//! d_s omega + w . grad_y omega = nu q^{jk} d_j d_k omega + curl f
//! ```
//!
//! with `w = T (u - V)`. For affine motions `w = J grad(psi + k |y|^2 / 2)`
//! where `psi` is the pulled-back stream function and `k` the swirl of
//! `rho - V` (see [`AffineRho`]). Each step advances the transport with
//! SSP-RK2 and then applies an implicit diffusion solve.

mod advect;
mod initial;

pub use initial::{mollify_initial, mollify_initial_with_metric, InitialPreset};

use std::fmt;
use std::sync::Arc;

use crate::error::{FlowError, Result};
use crate::expr::Expr;
use crate::grid::{
    gradient, solve_dirichlet_with, solve_helmholtz_dirichlet, elliptic_apply_with, BoundaryRule,
    DirichletOptions, Grid, ScalarField, VectorField,
};
use crate::homogenize::AffineRho;
use crate::motion::{perp_matrix, AffineFrame, Mat2, MotionSpec, Vec2};
use advect::{corner_stream, Fluxes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdvectionScheme {
    /// Second-order MUSCL reconstruction with the minmod limiter.
    #[default]
    UpwindMuscl,
    /// Unlimited centred face values; for smooth convergence studies.
    CentralRk2,
    /// First-order donor cell.
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiffusionScheme {
    #[default]
    BackwardEuler,
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub cfl_limit: f64,
    pub advection: AdvectionScheme,
    pub diffusion: DiffusionScheme,
}

impl StepConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            cfl_limit: 0.4,
            advection: AdvectionScheme::default(),
            diffusion: DiffusionScheme::default(),
        }
    }
}

/// Body force, described through its curl.
#[derive(Clone, Default)]
pub enum Forcing {
    /// `f = grad(fbar)`; no vorticity source.
    #[default]
    Potential,
    /// `curl f` as a function of the physical point and time.
    Curl(Arc<dyn Fn(Vec2, f64) -> f64 + Send + Sync>),
}

impl Forcing {
    pub fn from_expr(e: Expr) -> Self {
        Forcing::Curl(Arc::new(move |x, t| e.eval(t, x[0], x[1])))
    }

    pub fn is_potential(&self) -> bool {
        matches!(self, Forcing::Potential)
    }
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Potential => write!(f, "Potential"),
            Forcing::Curl(_) => write!(f, "Curl(..)"),
        }
    }
}

/// Pulled-back `curl f` at time `t`.
pub fn vorticity_forcing(forcing: &Forcing, m: &MotionSpec, t: f64, grid: Grid) -> Result<ScalarField> {
    match forcing {
        Forcing::Potential => Ok(ScalarField::zeros(grid)),
        Forcing::Curl(c) => {
            let mut f = ScalarField::zeros(grid);
            for i in 0..grid.n_r() {
                for j in 0..grid.n_theta() {
                    let x = m.map_backward(grid.point(i, j), t)?;
                    f.set(i, j, c(x, t));
                }
            }
            f.ensure_finite("forcing")?;
            Ok(f)
        }
    }
}

/// Pulled-back Poisson solve `q^{jk} d_j d_k psi = omega`, `psi = 0` on
/// `r = 1`, and the physical velocity `v = J grad_x psi` at the nodes.
pub fn biot_savart(omega: &ScalarField, m: &MotionSpec, t: f64) -> Result<(ScalarField, VectorField)> {
    let frame = m.require_affine(t)?;
    biot_savart_in(omega, &frame, None)
}

fn biot_savart_in(
    omega: &ScalarField,
    frame: &AffineFrame,
    guess: Option<&ScalarField>,
) -> Result<(ScalarField, VectorField)> {
    let g = omega.grid();
    let tm = frame.t();
    let q = tm * tm.transpose();
    let zero = vec![0.0; g.n_theta()];
    let psi = solve_dirichlet_with(
        &q,
        omega,
        &zero,
        DirichletOptions {
            initial_guess: guess,
            ..Default::default()
        },
    )?;
    let v = physical_velocity(&psi, &tm);
    Ok((psi, v))
}

/// `v = J T^T grad_y psi`.
fn physical_velocity(psi: &ScalarField, tm: &Mat2) -> VectorField {
    let gy = gradient(psi);
    let a = perp_matrix() * tm.transpose();
    let mut v = VectorField::zeros(psi.grid());
    for k in 0..v.x.len() {
        let w = a * Vec2::new(gy.x[k], gy.y[k]);
        v.x[k] = w[0];
        v.y[k] = w[1];
    }
    v
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub omega: ScalarField,
    pub psi: ScalarField,
    /// Vortical part `v` of the physical velocity.
    pub v: VectorField,
    pub rho: VectorField,
    /// Physical velocity `u = v + rho`.
    pub u_phys: VectorField,
    pub t: f64,
    pub nu: f64,
    pub motion: MotionSpec,
    pub forcing: Forcing,
    frame: AffineFrame,
    arho: AffineRho,
    fluxes: Fluxes,
}

impl SolverState {
    /// State at `t = 0` for the given initial vorticity.
    pub fn new(motion: MotionSpec, omega: ScalarField, nu: f64, forcing: Forcing) -> Result<Self> {
        Self::at_time(motion, omega, 0.0, nu, forcing)
    }

    pub fn at_time(motion: MotionSpec, omega: ScalarField, t: f64, nu: f64, forcing: Forcing) -> Result<Self> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(FlowError::Argument(format!("viscosity must be >= 0, got {nu}")));
        }
        omega.ensure_finite("initial vorticity")?;
        let frame = motion.require_affine(t)?;
        let (psi, v) = biot_savart_in(&omega, &frame, None)?;
        Ok(Self::assemble(motion, omega, psi, v, t, nu, forcing, frame))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        motion: MotionSpec,
        omega: ScalarField,
        psi: ScalarField,
        v: VectorField,
        t: f64,
        nu: f64,
        forcing: Forcing,
        frame: AffineFrame,
    ) -> Self {
        let g = omega.grid();
        let arho = AffineRho::from_frame(&frame);
        let mut rho = VectorField::zeros(g);
        let mut u = v.clone();
        for i in 0..g.n_r() {
            for j in 0..g.n_theta() {
                let x = frame.m * g.point(i, j) + frame.c;
                let r = arho.rho(x, frame.c);
                rho.set(i, j, r);
                u.set(i, j, v.at(i, j) + r);
            }
        }
        let fluxes = Fluxes::from_corners(g, &corner_stream(&psi, arho.swirl));
        Self {
            omega,
            psi,
            v,
            rho,
            u_phys: u,
            t,
            nu,
            motion,
            forcing,
            frame,
            arho,
            fluxes,
        }
    }

    pub fn grid(&self) -> Grid {
        self.omega.grid()
    }

    pub fn frame(&self) -> &AffineFrame {
        &self.frame
    }

    pub fn affine_rho(&self) -> &AffineRho {
        &self.arho
    }

    /// Metric `q = T T^T` at the current time.
    pub fn metric(&self) -> Mat2 {
        let tm = self.frame.t();
        tm * tm.transpose()
    }

    /// Largest per-cell Courant number of the current transport field.
    pub fn courant(&self, dt: f64) -> f64 {
        self.fluxes.courant(dt)
    }

    /// Advances by one step; `self` is left untouched.
    pub fn step(&self, cfg: &StepConfig) -> Result<SolverState> {
        step(self, cfg)
    }
}

/// Reference transport field `w = T (u - V)` at the nodes.
pub fn advection_field(state: &SolverState) -> VectorField {
    let g = state.grid();
    let f = &state.frame;
    let tm = f.t();
    let mut w = VectorField::zeros(g);
    for i in 0..g.n_r() {
        for j in 0..g.n_theta() {
            let y = g.point(i, j);
            let vel = f.m_dot * y + f.c_dot;
            w.set(i, j, tm * (state.u_phys.at(i, j) - vel));
        }
    }
    w
}

/// `max_j |w(1, theta_j) . yhat_j|` using the extrapolated boundary trace.
pub fn boundary_tangency(state: &SolverState) -> f64 {
    let g = state.grid();
    let w = advection_field(state);
    let tx = w.component(0).boundary_trace();
    let ty = w.component(1).boundary_trace();
    (0..g.n_theta())
        .map(|j| {
            let (s, c) = g.angle(j).sin_cos();
            (tx[j] * c + ty[j] * s).abs()
        })
        .fold(0.0, f64::max)
}

fn check_cfl(fluxes: &Fluxes, cfg: &StepConfig) -> Result<()> {
    let c = fluxes.courant(cfg.dt);
    if c > cfg.cfl_limit {
        return Err(FlowError::Cfl {
            courant: c,
            limit: cfg.cfl_limit,
            suggested_dt: 0.9 * cfg.dt * cfg.cfl_limit / c,
        });
    }
    Ok(())
}

/// One Lie-split step: SSP-RK2 transport (Biot-Savart refreshed at the
/// stage time), then implicit diffusion with `omega = 0` on `r = 1` when
/// `nu > 0`, then a final velocity refresh at `t + dt`.
pub fn step(state: &SolverState, cfg: &StepConfig) -> Result<SolverState> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(FlowError::Argument(format!("dt must be positive, got {}", cfg.dt)));
    }
    if !(cfg.cfl_limit > 0.0) {
        return Err(FlowError::Argument("cfl limit must be positive".into()));
    }
    let g = state.grid();
    let dt = cfg.dt;
    let t1 = state.t + dt;
    let m = &state.motion;
    m.check_time(t1)?;
    let frame1 = m.require_affine(t1)?;
    let swirl1 = AffineRho::from_frame(&frame1).swirl;

    check_cfl(&state.fluxes, cfg)?;
    let f0 = vorticity_forcing(&state.forcing, m, state.t, g)?;
    let mut k = vec![0.0; g.len()];
    state.fluxes.tendency(&state.omega, cfg.advection, &mut k);
    let mut w1 = state.omega.clone();
    for (idx, v) in w1.values.iter_mut().enumerate() {
        *v += dt * (k[idx] + f0.values[idx]);
    }

    let (psi1, _) = biot_savart_in(&w1, &frame1, Some(&state.psi))?;
    let flux1 = Fluxes::from_corners(g, &corner_stream(&psi1, swirl1));
    check_cfl(&flux1, cfg)?;
    let f1 = vorticity_forcing(&state.forcing, m, t1, g)?;
    flux1.tendency(&w1, cfg.advection, &mut k);
    let mut w2 = state.omega.clone();
    for (idx, v) in w2.values.iter_mut().enumerate() {
        *v = 0.5 * *v + 0.5 * (w1.values[idx] + dt * (k[idx] + f1.values[idx]));
    }
    w2.ensure_finite("vorticity after transport")?;

    let tm1 = frame1.t();
    let q1 = tm1 * tm1.transpose();
    let omega = if state.nu > 0.0 {
        diffuse(&w2, &q1, state.nu * dt, cfg.diffusion)?
    } else {
        w2
    };
    omega.ensure_finite("vorticity")?;
    let (psi, v) = biot_savart_in(&omega, &frame1, Some(&psi1))?;
    Ok(SolverState::assemble(
        m.clone(),
        omega,
        psi,
        v,
        t1,
        state.nu,
        state.forcing.clone(),
        frame1,
    ))
}

/// Solves `(I - s L_q) out = omega` (backward Euler) or the Crank-Nicolson
/// analogue, with `out = 0` on `r = 1` via the linear ghost.
pub(crate) fn diffuse(omega: &ScalarField, q: &Mat2, s: f64, scheme: DiffusionScheme) -> Result<ScalarField> {
    let zero = vec![0.0; omega.grid().n_theta()];
    let opts = DirichletOptions {
        initial_guess: Some(omega),
        ..Default::default()
    };
    match scheme {
        DiffusionScheme::BackwardEuler => solve_helmholtz_dirichlet(q, 1.0, -s, omega, &zero, opts),
        DiffusionScheme::CrankNicolson => {
            let mut rhs = elliptic_apply_with(q, omega, BoundaryRule::DirichletLinear(&zero))?;
            rhs.scale(0.5 * s);
            rhs.axpy(1.0, omega);
            solve_helmholtz_dirichlet(q, 1.0, -0.5 * s, &rhs, &zero, opts)
        }
    }
}

#[cfg(test)]
mod tests;

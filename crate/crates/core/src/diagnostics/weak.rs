//! Time-integrated weak-form defect of a trajectory.
//!
//! The test field is `varrho = grad_x^perp alpha` with
//! `alpha(x, t) = h(t) phi(Phi(x, t))`, `phi` vanishing to second order on the
//! unit circle and `h(T) = 0`. Two pairings are evaluated:
//!
//! * vorticity form on the reference disk,
//!   `-int int omega (d_s alpha + w . grad alpha + nu L alpha) - int omega_0 alpha_0 - int int alpha curl f`;
//! * velocity form on the physical domain,
//!   `int int u . d_t varrho + u . (u . grad) varrho - nu grad u : grad varrho + int u_0 . varrho_0 - int int alpha curl f`.
//!
//! They agree for smooth solutions (integration by parts with
//! `int u . grad^perp alpha = -int omega alpha`), so their difference is a
//! discretization diagnostic.

use std::sync::Arc;

use crate::error::{FlowError, Result};
use crate::grid::{gradient, Grid};
use crate::motion::{perp_matrix, Mat2, TimeFn, Vec2};
use crate::solver::{advection_field, vorticity_forcing, SolverState};

type ScalarFn = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
type MatrixFn = Arc<dyn Fn(Vec2) -> Mat2 + Send + Sync>;

/// Spatial part `phi(y)` of the test stream function, with derivatives.
#[derive(Clone)]
pub struct TestFunction {
    value: ScalarFn,
    grad: VectorFn,
    hess: MatrixFn,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TestFunction")
    }
}

impl TestFunction {
    /// `(1 - r^2)^2 (c0 + c1 y1 + c2 y2)`.
    pub fn polynomial(c: [f64; 3]) -> Self {
        let lin = move |y: Vec2| c[0] + c[1] * y[0] + c[2] * y[1];
        let cv = Vec2::new(c[1], c[2]);
        Self {
            value: Arc::new(move |y| (1.0 - y.norm_squared()).powi(2) * lin(y)),
            grad: Arc::new(move |y| {
                let s = 1.0 - y.norm_squared();
                -4.0 * s * lin(y) * y + s * s * cv
            }),
            hess: Arc::new(move |y| {
                let s = 1.0 - y.norm_squared();
                let dp = -4.0 * s * y;
                let d2p = -4.0 * s * Mat2::identity() + 8.0 * y * y.transpose();
                lin(y) * d2p + dp * cv.transpose() + cv * dp.transpose()
            }),
        }
    }

    /// User-supplied `phi`; both `phi` and `grad phi` must vanish on the unit
    /// circle so the test velocity is tangent there (and in fact zero).
    pub fn custom(
        value: impl Fn(Vec2) -> f64 + Send + Sync + 'static,
        grad: impl Fn(Vec2) -> Vec2 + Send + Sync + 'static,
        hess: impl Fn(Vec2) -> Mat2 + Send + Sync + 'static,
    ) -> Result<Self> {
        for k in 0..64 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
            let y = Vec2::new(th.cos(), th.sin());
            let (v, gr) = (value(y), grad(y));
            if v.abs() > 1e-10 || gr.norm() > 1e-10 {
                return Err(FlowError::Argument(format!(
                    "test stream function must vanish with its gradient on r = 1 (theta = {th:.3}: phi = {v:e}, |grad| = {:e})",
                    gr.norm()
                )));
            }
        }
        Ok(Self {
            value: Arc::new(value),
            grad: Arc::new(grad),
            hess: Arc::new(hess),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakResidual {
    pub vorticity_form: f64,
    pub velocity_form: f64,
}

impl WeakResidual {
    /// Absolute defect of the vorticity pairing.
    pub fn value(&self) -> f64 {
        self.vorticity_form.abs()
    }

    /// Disagreement between the two pairings.
    pub fn route_gap(&self) -> f64 {
        (self.vorticity_form - self.velocity_form).abs()
    }
}

struct Sampled {
    phi: Vec<f64>,
    grad: Vec<Vec2>,
    hess: Vec<Mat2>,
}

/// Streams a trajectory through the weak form, trapezoidal in time.
pub struct WeakAccumulator {
    profile: TimeFn,
    horizon: f64,
    form_nu: f64,
    grid: Grid,
    s: Sampled,
    acc: [f64; 2],
    last: Option<(f64, [f64; 2])>,
}

impl WeakAccumulator {
    /// `initial` supplies `omega_0` and `u_0` for the initial pairing;
    /// `form_nu` is the viscosity written into the weak form (0 for the
    /// inviscid form).
    pub fn new(phi: &TestFunction, profile: TimeFn, horizon: f64, form_nu: f64, initial: &SolverState) -> Result<Self> {
        if profile.value(horizon).abs() > 1e-12 {
            return Err(FlowError::Argument(format!(
                "time profile must vanish at the final time, h(T) = {:e}",
                profile.value(horizon)
            )));
        }
        let g = initial.grid();
        let mut s = Sampled {
            phi: Vec::with_capacity(g.len()),
            grad: Vec::with_capacity(g.len()),
            hess: Vec::with_capacity(g.len()),
        };
        for i in 0..g.n_r() {
            for j in 0..g.n_theta() {
                let y = g.point(i, j);
                s.phi.push((phi.value)(y));
                s.grad.push((phi.grad)(y));
                s.hess.push((phi.hess)(y));
            }
        }
        let mut me = Self {
            profile,
            horizon,
            form_nu,
            grid: g,
            s,
            acc: [0.0; 2],
            last: None,
        };
        let h0 = me.profile.value(initial.t);
        let (mut wa, mut ub) = (0.0, 0.0);
        for i in 0..g.n_r() {
            let area = g.area(i);
            for j in 0..g.n_theta() {
                let k = g.idx(i, j);
                wa += initial.omega.values[k] * me.s.phi[k] * area;
                let varrho = h0 * initial.frame().m * (perp_matrix() * me.s.grad[k]);
                ub += initial.u_phys.at(i, j).dot(&varrho) * area;
            }
        }
        me.acc = [-h0 * wa, ub];
        Ok(me)
    }

    /// Adds the integrands at `state.t`; times must increase.
    pub fn push(&mut self, state: &SolverState) -> Result<()> {
        let g = self.grid;
        if state.grid() != g {
            return Err(FlowError::Argument("trajectory changes grid".into()));
        }
        let t = state.t;
        if let Some((tl, _)) = self.last {
            if t <= tl {
                return Err(FlowError::Argument("trajectory times must increase".into()));
            }
        }
        let (h, hd) = (self.profile.value(t), self.profile.deriv(t));
        let f = state.frame();
        let tm = f.t();
        let j = perp_matrix();
        let q = tm * tm.transpose();
        let w = advection_field(state);
        let force = vorticity_forcing(&state.forcing, &state.motion, t, g)?;
        let viscous = self.form_nu != 0.0;
        let grad_u = viscous.then(|| (gradient(&state.v.component(0)), gradient(&state.v.component(1))));
        let hess_rho = state.affine_rho().hess;

        let (mut ia, mut ib) = (0.0, 0.0);
        for i in 0..g.n_r() {
            let area = g.area(i);
            for jj in 0..g.n_theta() {
                let k = g.idx(i, jj);
                let y = g.point(i, jj);
                let om = state.omega.values[k];
                let (phi, gphi, hphi) = (self.s.phi[k], self.s.grad[k], &self.s.hess[k]);
                let lphi = (q.component_mul(hphi)).sum();
                let wk = Vec2::new(w.x[k], w.y[k]);
                ia += (-om * (hd * phi + h * wk.dot(&gphi) + self.form_nu * h * lphi) - h * phi * force.values[k]) * area;

                let gvec = j * gphi;
                let dg = j * hphi;
                let vel = f.m_dot * y + f.c_dot;
                let dt_varrho = hd * (f.m * gvec) + h * (f.m_dot * gvec) - h * (f.m * dg * (tm * vel));
                let dvarrho = h * f.m * dg * tm;
                let u = state.u_phys.at(i, jj);
                let mut ib_k = u.dot(&dt_varrho) + u.dot(&(dvarrho * u));
                if let Some((gx, gy)) = &grad_u {
                    let dyv = Mat2::new(gx.x[k], gx.y[k], gy.x[k], gy.y[k]);
                    let du = dyv * tm + hess_rho;
                    ib_k -= self.form_nu * du.component_mul(&dvarrho).sum();
                }
                ib += (ib_k - h * phi * force.values[k]) * area;
            }
        }
        let cur = [ia, ib];
        if let Some((tl, prev)) = self.last {
            let dt = t - tl;
            for r in 0..2 {
                self.acc[r] += 0.5 * dt * (prev[r] + cur[r]);
            }
        }
        self.last = Some((t, cur));
        Ok(())
    }

    /// Completes the integral; the last pushed time must be the horizon.
    pub fn finish(&self) -> Result<WeakResidual> {
        match self.last {
            Some((t, _)) if (t - self.horizon).abs() <= 1e-9 * self.horizon.max(1.0) => Ok(WeakResidual {
                vorticity_form: self.acc[0],
                velocity_form: self.acc[1],
            }),
            _ => Err(FlowError::Argument(
                "weak residual needs a trajectory reaching the final time".into(),
            )),
        }
    }
}

/// Weak-form defect of a stored trajectory, which must start at the initial
/// time and end at `horizon` (the zero of `profile`).
pub fn weak_residual(
    trajectory: &[SolverState],
    phi: &TestFunction,
    profile: TimeFn,
    horizon: f64,
    form_nu: f64,
) -> Result<WeakResidual> {
    let first = trajectory
        .first()
        .ok_or_else(|| FlowError::Argument("empty trajectory".into()))?;
    let mut acc = WeakAccumulator::new(phi, profile, horizon, form_nu, first)?;
    for s in trajectory {
        acc.push(s)?;
    }
    acc.finish()
}

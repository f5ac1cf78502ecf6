//! Norms, estimate ratios, and residuals of a solver state.

mod weak;

pub use weak::{weak_residual, TestFunction, WeakAccumulator, WeakResidual};

use std::io::Write;

use crate::error::Result;
use crate::grid::{gradient, integrate, ScalarField, VectorField};
use crate::motion::{Mat2, Vec2};
use crate::solver::SolverState;

/// Exponents at which vorticity norms are recorded.
pub const R_SET: [f64; 4] = [1.5, 2.0, 4.0, f64::INFINITY];

/// Column order of the diagnostics CSV.
pub const CSV_HEADER: &str =
    "t,l1p5,l2,l4,linf,gv1p5,gv2,gv4,cz2,energy,bflux,bc_un,bc_omega,circulation";

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `|omega|_{L^r}` for `r` in [`R_SET`].
    pub lr_norms: [f64; 4],
    /// `|grad_x v|_{L^r}` for the finite exponents of [`R_SET`].
    pub grad_v_norms: [f64; 3],
    /// `grad_v_norms / lr_norms`, 0 when the vorticity vanishes.
    pub cz_ratio: [f64; 3],
    /// `1/2 |u|^2_{L^2}`.
    pub energy: f64,
    /// `oint |v|^2 / 2 g ds`.
    pub boundary_flux_term: f64,
    /// `max |u . eta - g|` on the boundary.
    pub bc_un: f64,
    /// `max |omega|` on the boundary when `nu > 0`, else 0.
    pub bc_omega: f64,
    pub circulation: f64,
}

impl DiagnosticsRecord {
    pub fn csv_row(&self) -> String {
        let vals = [
            self.t,
            self.lr_norms[0],
            self.lr_norms[1],
            self.lr_norms[2],
            self.lr_norms[3],
            self.grad_v_norms[0],
            self.grad_v_norms[1],
            self.grad_v_norms[2],
            self.cz_ratio[1],
            self.energy,
            self.boundary_flux_term,
            self.bc_un,
            self.bc_omega,
            self.circulation,
        ];
        vals.iter().map(|v| format!("{v:.15e}")).collect::<Vec<_>>().join(",")
    }

    pub fn is_finite(&self) -> bool {
        self.csv_row().split(',').all(|s| s.parse::<f64>().is_ok_and(f64::is_finite))
    }
}

/// Pointwise Frobenius norm of `grad_x v`, where `d v_i / d x_j =
/// sum_k (d v_i / d y_k) T_kj`.
pub fn velocity_gradient_magnitude(v: &VectorField, tm: &Mat2) -> ScalarField {
    let g = v.grid();
    let gx = gradient(&v.component(0));
    let gy = gradient(&v.component(1));
    let mut out = ScalarField::zeros(g);
    for k in 0..g.len() {
        let dy = Mat2::new(gx.x[k], gx.y[k], gy.x[k], gy.y[k]);
        out.values[k] = (dy * tm).norm();
    }
    out
}

pub fn record(state: &SolverState) -> Result<DiagnosticsRecord> {
    let g = state.grid();
    let m = &state.motion;
    let t = state.t;
    let mut lr = [0.0; 4];
    for (k, r) in R_SET.iter().enumerate() {
        lr[k] = integrate(&state.omega, *r)?;
    }
    let gv_field = velocity_gradient_magnitude(&state.v, &state.frame().t());
    let mut gv = [0.0; 3];
    let mut cz = [0.0; 3];
    for k in 0..3 {
        gv[k] = integrate(&gv_field, R_SET[k])?;
        cz[k] = if lr[k] > 0.0 { gv[k] / lr[k] } else { 0.0 };
    }
    let u2 = state.u_phys.magnitude().map(|s| s * s);
    let energy = 0.5 * u2.integral();

    let (vx, vy) = (state.v.component(0).boundary_trace(), state.v.component(1).boundary_trace());
    let (ux, uy) = (
        state.u_phys.component(0).boundary_trace(),
        state.u_phys.component(1).boundary_trace(),
    );
    let mut bflux = 0.0;
    let mut bc_un: f64 = 0.0;
    for j in 0..g.n_theta() {
        let th = g.angle(j);
        let gj = m.boundary_flux(th, t)?;
        let eta = m.boundary_normal(th, t)?;
        let ds = m.arc_length_density(th, t)? * g.dtheta();
        bflux += 0.5 * (vx[j] * vx[j] + vy[j] * vy[j]) * gj * ds;
        bc_un = bc_un.max((Vec2::new(ux[j], uy[j]).dot(&eta) - gj).abs());
    }
    let bc_omega = if state.nu > 0.0 {
        state.omega.boundary_trace().iter().fold(0.0, |a: f64, v| a.max(v.abs()))
    } else {
        0.0
    };
    Ok(DiagnosticsRecord {
        t,
        lr_norms: lr,
        grad_v_norms: gv,
        cz_ratio: cz,
        energy,
        boundary_flux_term: bflux,
        bc_un,
        bc_omega,
        circulation: state.omega.integral(),
    })
}

pub fn write_csv_header(w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")
}

pub fn write_csv_row(w: &mut impl Write, r: &DiagnosticsRecord) -> std::io::Result<()> {
    writeln!(w, "{}", r.csv_row())
}

/// Relative growth allowed between consecutive norms.
pub const MONOTONICITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Index of the later record.
    pub step: usize,
    pub t: f64,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityVerdict {
    pub r: f64,
    pub first_violation: Option<Violation>,
}

impl MonotonicityVerdict {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks `|omega(t_{k+1})|_r <= |omega(t_k)|_r (1 + 1e-10)` for each `r`.
pub fn monotonicity_report(series: &[DiagnosticsRecord]) -> Vec<MonotonicityVerdict> {
    R_SET
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let first_violation = series.windows(2).enumerate().find_map(|(s, w)| {
                let (a, b) = (w[0].lr_norms[k], w[1].lr_norms[k]);
                (b > a * (1.0 + MONOTONICITY_TOL)).then(|| Violation {
                    step: s + 1,
                    t: w[1].t,
                    before: a,
                    after: b,
                })
            });
            MonotonicityVerdict { r, first_violation }
        })
        .collect()
}

#[cfg(test)]
mod tests;

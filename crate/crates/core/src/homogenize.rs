//! Harmonic homogenization of the boundary flux.
//!
//! `h` solves `Laplace h = 0` in `Omega_t` with `dh/deta = g`, and `rho = grad h`
//! is divergence-free with `rho . eta = g`, so `v = u - rho` is tangent to the
//! moving boundary. For affine motions `rho` is affine in `x` and known in
//! closed form; otherwise it comes from a Neumann solve on the reference disk.

use crate::error::{FlowError, Result};
use crate::grid::{gradient, solve_neumann, Grid, ScalarField, VectorField};
use crate::motion::{perp_matrix, rotation, AffineFrame, Mat2, MotionKind, MotionSpec, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoSource {
    Analytic,
    Numerical,
}

#[derive(Debug, Clone)]
pub struct HomogenizationResult {
    /// `h` at the reference nodes, zero mean.
    pub h: ScalarField,
    /// Physical Cartesian components of `grad_x h` at the reference nodes.
    pub rho: VectorField,
    pub source: RhoSource,
}

/// `rho(x) = hess (x - c) + grad0` for an affine motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineRho {
    /// Symmetric, trace-free Hessian of `h`.
    pub hess: Mat2,
    pub grad0: Vec2,
    /// Rate `k` in `T (rho - V) = J grad(k |y|^2 / 2)`: the reference-frame
    /// part of the transport velocity contributed by `rho - V`.
    pub swirl: f64,
}

impl AffineRho {
    /// Builds `rho` from the material velocity `V = B (x - c) + c_dot`.
    ///
    /// `rho - V` must be divergence-free and tangent to the ellipse
    /// `(x - c)^T E (x - c) = 1`, `E = (M M^T)^-1`, which forces it to be
    /// `w E^-1 J (x - c)`; `w` is fixed by requiring `rho` to be curl-free.
    pub fn from_frame(f: &AffineFrame) -> Self {
        let b = f.velocity_gradient();
        let e_inv = f.m * f.m.transpose();
        let w = -(b[(1, 0)] - b[(0, 1)]) / e_inv.trace();
        let mut hess = b + w * e_inv * perp_matrix();
        // symmetric up to round-off; make it exact
        let off = 0.5 * (hess[(0, 1)] + hess[(1, 0)]);
        hess[(0, 1)] = off;
        hess[(1, 0)] = off;
        Self {
            hess,
            grad0: f.c_dot,
            swirl: w,
        }
    }

    pub fn rho(&self, x: Vec2, c: Vec2) -> Vec2 {
        self.hess * (x - c) + self.grad0
    }
}

/// Closed-form `h` and `rho` at a physical point, per built-in kind.
pub fn analytic_rho_at(m: &MotionSpec, x: Vec2, t: f64) -> Result<(f64, Vec2)> {
    m.check_time(t)?;
    Ok(match &m.kind {
        MotionKind::Identity => (0.0, Vec2::zeros()),
        MotionKind::Translation { cx, cy } => {
            let cd = Vec2::new(cx.deriv(t), cy.deriv(t));
            let c = Vec2::new(cx.value(t), cy.value(t));
            (cd.dot(&(x - c)), cd)
        }
        MotionKind::Stretch { a } => {
            let ad = a.deriv(t);
            (0.5 * ad * (x[0] * x[0] - x[1] * x[1]), ad * Vec2::new(x[0], -x[1]))
        }
        MotionKind::RotatingEllipse { ax, ay, phi } => {
            let (a2, b2) = (ax * ax, ay * ay);
            let kappa = phi.deriv(t) * (a2 - b2) / (a2 + b2);
            let r = rotation(phi.value(t));
            let body = r.transpose() * x;
            let grad_body = kappa * Vec2::new(body[1], body[0]);
            (kappa * body[0] * body[1], r * grad_body)
        }
        MotionKind::PlugIn(_) => {
            return Err(FlowError::Unsupported(
                "no closed-form homogenization for plug-in motions; use numerical_rho".into(),
            ))
        }
    })
}

/// Closed-form homogenization sampled on `grid`. `h` is shifted to zero mean.
pub fn analytic_rho(m: &MotionSpec, t: f64, grid: Grid) -> Result<HomogenizationResult> {
    let mut h = ScalarField::zeros(grid);
    let mut rho = VectorField::zeros(grid);
    for i in 0..grid.n_r() {
        for j in 0..grid.n_theta() {
            let x = m.map_backward(grid.point(i, j), t)?;
            let (hv, rv) = analytic_rho_at(m, x, t)?;
            h.set(i, j, hv);
            rho.set(i, j, rv);
        }
    }
    let mean = h.mean();
    h.values.iter_mut().for_each(|v| *v -= mean);
    Ok(HomogenizationResult {
        h,
        rho,
        source: RhoSource::Analytic,
    })
}

/// Homogenization by a Neumann solve of the pulled-back Laplacian
/// `q^{jk} d_j d_k h = 0` with conormal data `g |T^T yhat|`.
/// Requires an affine motion (constant metric).
pub fn numerical_rho(m: &MotionSpec, t: f64, grid: Grid) -> Result<HomogenizationResult> {
    let frame = m.require_affine(t)?;
    let tm = frame.t();
    let q = tm * tm.transpose();
    let flux: Vec<f64> = (0..grid.n_theta())
        .map(|j| {
            let th = grid.angle(j);
            Ok(m.boundary_flux(th, t)? * m.arc_length_density(th, t)?)
        })
        .collect::<Result<_>>()?;
    let circ: f64 = flux.iter().sum::<f64>() * grid.dtheta();
    if circ.abs() > 1e-8 {
        return Err(FlowError::Argument(format!(
            "boundary flux does not integrate to zero ({circ:e})"
        )));
    }
    let h = solve_neumann(&q, &ScalarField::zeros(grid), &flux)?;
    let gy = gradient(&h);
    let mut rho = VectorField::zeros(grid);
    let tt = tm.transpose();
    for k in 0..grid.len() {
        let v = tt * Vec2::new(gy.x[k], gy.y[k]);
        rho.x[k] = v[0];
        rho.y[k] = v[1];
    }
    Ok(HomogenizationResult {
        h,
        rho,
        source: RhoSource::Numerical,
    })
}

/// `max_j |rho(xbar_j) . eta_j - g_j|` over `n` equally spaced boundary points,
/// evaluating the closed form at the boundary itself.
pub fn analytic_boundary_residual(m: &MotionSpec, t: f64, n: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let x = m.map_backward(Vec2::new(th.cos(), th.sin()), t)?;
        let (_, rho) = analytic_rho_at(m, x, t)?;
        let r = rho.dot(&m.boundary_normal(th, t)?) - m.boundary_flux(th, t)?;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Reference-coordinate Hessian `M^T H M` of `h` for an affine motion.
pub fn reference_hessian(f: &AffineFrame, r: &AffineRho) -> Mat2 {
    f.m.transpose() * r.hess * f.m
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::TimeFn;

    fn motions() -> Vec<MotionSpec> {
        vec![
            MotionSpec::identity(1.0),
            MotionSpec::translation(TimeFn::parse("0.5*sin(t)").unwrap(), TimeFn::parse("-0.3*t^2").unwrap(), 1.0)
                .unwrap(),
            MotionSpec::stretch(TimeFn::parse("0.2*t").unwrap(), 1.0).unwrap(),
            MotionSpec::rotating_ellipse(2f64.sqrt(), 0.5f64.sqrt(), TimeFn::linear(1.0), 1.0).unwrap(),
        ]
    }

    #[test]
    fn kappa_example() {
        let m = MotionSpec::rotating_ellipse(2f64.sqrt(), 0.5f64.sqrt(), TimeFn::linear(1.0), 1.0).unwrap();
        let (h, _) = analytic_rho_at(&m, Vec2::new(1.0, 1.0), 0.0).unwrap();
        assert!((h - 0.6).abs() < 1e-14);
    }

    #[test]
    fn analytic_boundary_residual_vanishes() {
        for m in motions() {
            for k in 0..16 {
                let t = k as f64 / 15.0;
                let r = analytic_boundary_residual(&m, t, 256).unwrap();
                assert!(r < 1e-10, "{:?} t={t}: {r}", m.kind);
            }
        }
    }

    #[test]
    fn translation_rho_is_velocity() {
        let m = MotionSpec::translation(TimeFn::linear(1.0), TimeFn::constant(0.0), 1.0).unwrap();
        let (_, rho) = analytic_rho_at(&m, Vec2::new(0.3, 0.9), 0.5).unwrap();
        assert_eq!(rho, Vec2::new(1.0, 0.0));
        for th in [0.0f64, 1.0, 2.0] {
            let x = m.map_backward(Vec2::new(th.cos(), th.sin()), 0.5).unwrap();
            let (_, rho) = analytic_rho_at(&m, x, 0.5).unwrap();
            assert!((rho.dot(&m.boundary_normal(th, 0.5).unwrap()) - th.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_formula_matches_closed_forms() {
        for m in motions() {
            for t in [0.0, 0.37, 0.81] {
                let f = m.require_affine(t).unwrap();
                let ar = AffineRho::from_frame(&f);
                assert!((ar.hess - ar.hess.transpose()).norm() < 1e-14);
                assert!(ar.hess.trace().abs() < 1e-13);
                for p in [Vec2::new(0.2, -0.4), Vec2::new(-0.7, 0.1)] {
                    let x = m.map_backward(p, t).unwrap();
                    let (_, exact) = analytic_rho_at(&m, x, t).unwrap();
                    assert!((ar.rho(x, f.c) - exact).norm() < 1e-13, "{:?}", m.kind);
                }
            }
        }
    }

    #[test]
    fn swirl_matches_rotating_ellipse_rate() {
        let (ax, ay) = (2.0, 0.5);
        let m = MotionSpec::rotating_ellipse(ax, ay, TimeFn::linear(0.8), 1.0).unwrap();
        let ar = AffineRho::from_frame(&m.require_affine(0.3).unwrap());
        assert!((ar.swirl + 2.0 * 0.8 / (ax * ax + ay * ay)).abs() < 1e-14);
    }

    #[test]
    fn numerical_identity_is_zero() {
        let g = Grid::new(16, 32).unwrap();
        let r = numerical_rho(&MotionSpec::identity(1.0), 0.5, g).unwrap();
        assert!(r.rho.magnitude().max_abs() < 1e-12);
    }

    #[test]
    fn numerical_matches_analytic_second_order() {
        let m = MotionSpec::stretch(TimeFn::parse("0.2*t").unwrap(), 1.0).unwrap();
        let err = |n: usize| {
            let g = Grid::new(n, 2 * n).unwrap();
            let a = analytic_rho(&m, 0.5, g).unwrap();
            let b = numerical_rho(&m, 0.5, g).unwrap();
            a.rho.max_abs_diff(&b.rho)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < 1e-3 && e1 / e2 > 3.0, "{e1} {e2}");
    }
}

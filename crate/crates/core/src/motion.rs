//! Prescribed motion of the material domain.
//!
//! A motion is a time-dependent, area-preserving map `Phi(., t)` from the
//! physical domain `Omega_t` onto the open unit disk, with inverse `Psi`.
//! The built-in family is affine, `Psi(y, t) = M(t) y + c(t)` with
//! `det M = 1`, so every derivative is closed form and the Christoffel
//! symbols vanish. Other motions can be supplied through [`PlugInMotion`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::error::{FlowError, Result};
use crate::expr::{Expr, ParseError, Var};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Rotation by +90 degrees, `J v = v^perp`.
pub fn perp_matrix() -> Mat2 {
    Mat2::new(0.0, -1.0, 1.0, 0.0)
}

pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// A smooth scalar function of time together with its derivative.
#[derive(Clone)]
pub struct TimeFn {
    value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    deriv: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    label: String,
}

impl TimeFn {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            deriv: Arc::new(deriv),
            label: "<closure>".into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        let mut f = Self::new(move |_| c, |_| 0.0);
        f.label = format!("{c}");
        f
    }

    pub fn linear(slope: f64) -> Self {
        let mut f = Self::new(move |t| slope * t, move |_| slope);
        f.label = format!("{slope}*t");
        f
    }

    /// Parses an expression in `t`; the derivative is symbolic.
    pub fn parse(src: &str) -> std::result::Result<Self, ParseError> {
        let e = Expr::parse(src)?;
        if e.depends_on(Var::X) || e.depends_on(Var::Y) {
            return Err(ParseError {
                pos: 0,
                msg: "time function may only depend on t".into(),
            });
        }
        let d = e.derivative(Var::T);
        Ok(Self {
            value: Arc::new(move |t| e.eval_t(t)),
            deriv: Arc::new(move |t| d.eval_t(t)),
            label: src.trim().to_string(),
        })
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        (self.value)(t)
    }

    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        (self.deriv)(t)
    }
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeFn({})", self.label)
    }
}

/// User-supplied motion outside the built-in family.
///
/// The unit-determinant property is not guaranteed for these and is checked
/// whenever the Jacobian is requested.
pub trait PlugInMotion: Send + Sync {
    /// `Phi(x, t)`: physical point to reference point.
    fn forward(&self, x: Vec2, t: f64) -> Vec2;
    /// `Psi(y, t)`: reference point to physical point.
    fn backward(&self, y: Vec2, t: f64) -> Vec2;
    /// `d Phi_i / d x_j` at the physical point `x`.
    fn jacobian(&self, x: Vec2, t: f64) -> Mat2;
    /// `d Psi / d t` at fixed reference point `y`.
    fn backward_time_derivative(&self, y: Vec2, t: f64) -> Vec2;
}

#[derive(Clone)]
pub enum MotionKind {
    Identity,
    /// Rigid shift, `Omega_t = c(t) + unit disk`.
    Translation { cx: TimeFn, cy: TimeFn },
    /// `Omega_t = diag(e^a, e^-a)` applied to the unit disk.
    Stretch { a: TimeFn },
    /// Ellipse with semi-axes `(ax, ay)`, `ax * ay = 1`, rotated by `phi(t)`.
    RotatingEllipse { ax: f64, ay: f64, phi: TimeFn },
    PlugIn(Arc<dyn PlugInMotion>),
}

impl fmt::Debug for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MotionKind::Identity => write!(f, "Identity"),
            MotionKind::Translation { cx, cy } => write!(f, "Translation({cx:?}, {cy:?})"),
            MotionKind::Stretch { a } => write!(f, "Stretch({a:?})"),
            MotionKind::RotatingEllipse { ax, ay, phi } => {
                write!(f, "RotatingEllipse({ax}, {ay}, {phi:?})")
            }
            MotionKind::PlugIn(_) => write!(f, "PlugIn"),
        }
    }
}

/// Affine description `Psi(y, t) = m y + c` with time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFrame {
    pub m: Mat2,
    pub m_dot: Mat2,
    pub c: Vec2,
    pub c_dot: Vec2,
}

impl AffineFrame {
    /// `dy/dx = m^-1`.
    pub fn t(&self) -> Mat2 {
        inverse(&self.m)
    }

    /// Constant velocity gradient `B = m_dot m^-1` of the material velocity.
    pub fn velocity_gradient(&self) -> Mat2 {
        self.m_dot * self.t()
    }
}

/// Per-point metric quantities of the pullback to the reference disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricData {
    /// `q^{ij} = (dy_i/dx_k)(dy_j/dx_k)`.
    pub q_up: Mat2,
    /// `q_{ij} = (dx_k/dy_i)(dx_k/dy_j)`.
    pub q_down: Mat2,
    /// `gamma[k][i][j]` holds the Christoffel symbol with upper index `k`.
    pub gamma: [[[f64; 2]; 2]; 2],
    /// `A` with `omega = sum_{n,m} A[n][m] * d_m v~^n`.
    pub curl_matrix: Mat2,
}

impl MetricData {
    pub fn identity() -> Self {
        Self::from_jacobian(&Mat2::identity())
    }

    /// Metric of an affine map with `dy/dx = t`.
    pub fn from_jacobian(t: &Mat2) -> Self {
        let t_inv = inverse(t);
        let q_up = t * t.transpose();
        let q_down = t_inv.transpose() * t_inv;
        let eps = [[0.0, 1.0], [-1.0, 0.0]];
        let mut a = Mat2::zeros();
        for n in 0..2 {
            for m in 0..2 {
                let mut s = 0.0;
                for (l, eps_l) in eps.iter().enumerate() {
                    for (k, e) in eps_l.iter().enumerate() {
                        s += e * t[(m, l)] * t_inv[(k, n)];
                    }
                }
                a[(n, m)] = s;
            }
        }
        Self {
            q_up,
            q_down,
            gamma: [[[0.0; 2]; 2]; 2],
            curl_matrix: a,
        }
    }

    /// Applies `A : D` where `d[(n, m)] = d v~^n / d y_m`.
    pub fn curl_of(&self, d: &Mat2) -> f64 {
        let mut s = 0.0;
        for n in 0..2 {
            for m in 0..2 {
                s += self.curl_matrix[(n, m)] * d[(n, m)];
            }
        }
        s
    }
}

pub(crate) fn inverse(m: &Mat2) -> Mat2 {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det
}

pub(crate) fn det(m: &Mat2) -> f64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

const PLUGIN_DET_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct MotionSpec {
    pub kind: MotionKind,
    horizon: f64,
}

impl MotionSpec {
    /// Validates the parameters. Built-in kinds must start from the unit
    /// disk (`c(0) = 0`, `a(0) = 0`, `phi(0) = 0`).
    pub fn new(kind: MotionKind, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(FlowError::Argument(format!("horizon must be positive, got {horizon}")));
        }
        let at0 = |name: &str, v: f64| -> Result<()> {
            if v.abs() > 1e-12 {
                Err(FlowError::Argument(format!("{name}(0) must be 0, got {v}")))
            } else {
                Ok(())
            }
        };
        match &kind {
            MotionKind::Identity | MotionKind::PlugIn(_) => {}
            MotionKind::Translation { cx, cy } => {
                at0("cx", cx.value(0.0))?;
                at0("cy", cy.value(0.0))?;
            }
            MotionKind::Stretch { a } => at0("a", a.value(0.0))?,
            MotionKind::RotatingEllipse { ax, ay, phi } => {
                if !(*ax > 0.0 && *ay > 0.0) {
                    return Err(FlowError::Argument("ellipse semi-axes must be positive".into()));
                }
                if (ax * ay - 1.0).abs() > 1e-12 {
                    return Err(FlowError::Argument(format!(
                        "ellipse semi-axes must satisfy ax*ay = 1, got {}",
                        ax * ay
                    )));
                }
                at0("phi", phi.value(0.0))?;
            }
        }
        let spec = Self { kind, horizon };
        if let MotionKind::PlugIn(_) = spec.kind {
            // sample the unit-determinant property up front
            for k in 0..=8 {
                let t = horizon * k as f64 / 8.0;
                for (y1, y2) in [(0.0, 0.0), (0.5, 0.1), (-0.3, 0.7), (0.9, -0.2)] {
                    let x = spec.map_backward(Vec2::new(y1, y2), t)?;
                    spec.jacobian(x, t)?;
                }
            }
        }
        Ok(spec)
    }

    pub fn identity(horizon: f64) -> Self {
        Self::new(MotionKind::Identity, horizon).expect("identity motion is valid")
    }

    pub fn translation(cx: TimeFn, cy: TimeFn, horizon: f64) -> Result<Self> {
        Self::new(MotionKind::Translation { cx, cy }, horizon)
    }

    pub fn stretch(a: TimeFn, horizon: f64) -> Result<Self> {
        Self::new(MotionKind::Stretch { a }, horizon)
    }

    pub fn rotating_ellipse(ax: f64, ay: f64, phi: TimeFn, horizon: f64) -> Result<Self> {
        Self::new(MotionKind::RotatingEllipse { ax, ay, phi }, horizon)
    }

    pub fn plug_in(m: Arc<dyn PlugInMotion>, horizon: f64) -> Result<Self> {
        Self::new(MotionKind::PlugIn(m), horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self.kind, MotionKind::PlugIn(_))
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            MotionKind::Identity => "identity",
            MotionKind::Translation { .. } => "translation",
            MotionKind::Stretch { .. } => "stretch",
            MotionKind::RotatingEllipse { .. } => "rotating_ellipse",
            MotionKind::PlugIn(_) => "plug_in",
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        // tolerate accumulated round-off at the end of a run
        let slack = 1e-9 * self.horizon;
        if t.is_finite() && t >= -slack && t <= self.horizon + slack {
            Ok(())
        } else {
            Err(FlowError::OutsideHorizon {
                t,
                horizon: self.horizon,
            })
        }
    }

    /// Closed-form affine frame of a built-in kind (no horizon check).
    fn builtin_frame(&self, t: f64) -> Option<AffineFrame> {
        let zero = Vec2::zeros();
        Some(match &self.kind {
            MotionKind::Identity => AffineFrame {
                m: Mat2::identity(),
                m_dot: Mat2::zeros(),
                c: zero,
                c_dot: zero,
            },
            MotionKind::Translation { cx, cy } => AffineFrame {
                m: Mat2::identity(),
                m_dot: Mat2::zeros(),
                c: Vec2::new(cx.value(t), cy.value(t)),
                c_dot: Vec2::new(cx.deriv(t), cy.deriv(t)),
            },
            MotionKind::Stretch { a } => {
                let (av, ad) = (a.value(t), a.deriv(t));
                let (ep, em) = (av.exp(), (-av).exp());
                AffineFrame {
                    m: Mat2::new(ep, 0.0, 0.0, em),
                    m_dot: Mat2::new(ad * ep, 0.0, 0.0, -ad * em),
                    c: zero,
                    c_dot: zero,
                }
            }
            MotionKind::RotatingEllipse { ax, ay, phi } => {
                let r = rotation(phi.value(t));
                let s = Mat2::new(*ax, 0.0, 0.0, *ay);
                AffineFrame {
                    m: r * s,
                    m_dot: phi.deriv(t) * perp_matrix() * r * s,
                    c: zero,
                    c_dot: zero,
                }
            }
            MotionKind::PlugIn(_) => return None,
        })
    }

    /// The affine frame at time `t`, if the motion is affine. Plug-ins are
    /// probed at a handful of points and accepted when affine to 1e-9.
    pub fn affine_frame(&self, t: f64) -> Result<Option<AffineFrame>> {
        self.check_time(t)?;
        if let Some(f) = self.builtin_frame(t) {
            return Ok(Some(f));
        }
        let MotionKind::PlugIn(p) = &self.kind else {
            unreachable!()
        };
        let o = p.backward(Vec2::zeros(), t);
        let e1 = p.backward(Vec2::new(1.0, 0.0), t) - o;
        let e2 = p.backward(Vec2::new(0.0, 1.0), t) - o;
        let m = Mat2::from_columns(&[e1, e2]);
        let od = p.backward_time_derivative(Vec2::zeros(), t);
        let d1 = p.backward_time_derivative(Vec2::new(1.0, 0.0), t) - od;
        let d2 = p.backward_time_derivative(Vec2::new(0.0, 1.0), t) - od;
        let m_dot = Mat2::from_columns(&[d1, d2]);
        let frame = AffineFrame {
            m,
            m_dot,
            c: o,
            c_dot: od,
        };
        for (y1, y2) in [(0.3, -0.6), (-0.8, 0.1), (0.45, 0.45), (-0.2, -0.9)] {
            let y = Vec2::new(y1, y2);
            let x = p.backward(y, t);
            let v = p.backward_time_derivative(y, t);
            if (x - (m * y + o)).norm() > 1e-9 || (v - (m_dot * y + od)).norm() > 1e-9 {
                return Ok(None);
            }
        }
        Ok(Some(frame))
    }

    /// Like [`affine_frame`](Self::affine_frame) but fails for non-affine motions.
    pub fn require_affine(&self, t: f64) -> Result<AffineFrame> {
        self.affine_frame(t)?.ok_or_else(|| {
            FlowError::Unsupported("the reference-disk solver requires an affine motion".into())
        })
    }

    /// `Phi(x, t)`.
    pub fn map_forward(&self, x: Vec2, t: f64) -> Result<Vec2> {
        self.check_time(t)?;
        match (&self.kind, self.builtin_frame(t)) {
            (_, Some(f)) => Ok(f.t() * (x - f.c)),
            (MotionKind::PlugIn(p), None) => Ok(p.forward(x, t)),
            _ => unreachable!(),
        }
    }

    /// `Psi(y, t)`.
    pub fn map_backward(&self, y: Vec2, t: f64) -> Result<Vec2> {
        self.check_time(t)?;
        match (&self.kind, self.builtin_frame(t)) {
            (_, Some(f)) => Ok(f.m * y + f.c),
            (MotionKind::PlugIn(p), None) => Ok(p.backward(y, t)),
            _ => unreachable!(),
        }
    }

    /// `d Phi_i / d x_j` at physical point `x`.
    pub fn jacobian(&self, x: Vec2, t: f64) -> Result<Mat2> {
        self.check_time(t)?;
        match (&self.kind, self.builtin_frame(t)) {
            (_, Some(f)) => Ok(f.t()),
            (MotionKind::PlugIn(p), None) => {
                let j = p.jacobian(x, t);
                let d = det(&j);
                if (d - 1.0).abs() > PLUGIN_DET_TOL || !d.is_finite() {
                    return Err(FlowError::Jacobian { det: d, t });
                }
                Ok(j)
            }
            _ => unreachable!(),
        }
    }

    /// Material velocity `V_t = d Psi / dt` at the physical point `Psi(y, t)`.
    pub fn material_velocity(&self, y: Vec2, t: f64) -> Result<Vec2> {
        self.check_time(t)?;
        match (&self.kind, self.builtin_frame(t)) {
            (_, Some(f)) => Ok(f.m_dot * y + f.c_dot),
            (MotionKind::PlugIn(p), None) => Ok(p.backward_time_derivative(y, t)),
            _ => unreachable!(),
        }
    }

    /// Unit outward normal of `dOmega_t` at `Psi((cos theta, sin theta), t)`.
    ///
    /// The boundary is the level set `|Phi(x, t)| = 1`, so the normal is
    /// parallel to `(dPhi/dx)^T y`.
    pub fn boundary_normal(&self, theta: f64, t: f64) -> Result<Vec2> {
        let y = Vec2::new(theta.cos(), theta.sin());
        let x = self.map_backward(y, t)?;
        let j = self.jacobian(x, t)?;
        let n = j.transpose() * y;
        Ok(n / n.norm())
    }

    /// Normal speed of the boundary, `g = V_t . eta`.
    pub fn boundary_flux(&self, theta: f64, t: f64) -> Result<f64> {
        let y = Vec2::new(theta.cos(), theta.sin());
        let v = self.material_velocity(y, t)?;
        Ok(v.dot(&self.boundary_normal(theta, t)?))
    }

    /// Physical arc length per unit reference angle at `theta`,
    /// `|(dPhi/dx)^T y|` (Nanson's relation with unit Jacobian).
    pub fn arc_length_density(&self, theta: f64, t: f64) -> Result<f64> {
        let y = Vec2::new(theta.cos(), theta.sin());
        let x = self.map_backward(y, t)?;
        Ok((self.jacobian(x, t)?.transpose() * y).norm())
    }

    /// `oint_{dOmega_t} g ds` by the periodic trapezoidal rule.
    pub fn flux_integral(&self, t: f64, n: usize) -> Result<f64> {
        let mut s = 0.0;
        for k in 0..n {
            let th = 2.0 * PI * k as f64 / n as f64;
            s += self.boundary_flux(th, t)? * self.arc_length_density(th, t)?;
        }
        Ok(s * 2.0 * PI / n as f64)
    }

    /// Metric tensors and curl matrix at reference point `y`.
    pub fn metric_at(&self, y: Vec2, t: f64) -> Result<MetricData> {
        let x = self.map_backward(y, t)?;
        let j = self.jacobian(x, t)?;
        let mut md = MetricData::from_jacobian(&j);
        if !self.is_builtin() {
            md.gamma = self.plugin_christoffel(y, t)?;
        }
        Ok(md)
    }

    /// Christoffel symbols of a plug-in by central differences of `dx/dy`.
    fn plugin_christoffel(&self, y: Vec2, t: f64) -> Result<[[[f64; 2]; 2]; 2]> {
        let h = 1e-4;
        let dxdy = |p: Vec2| -> Result<Mat2> {
            let x = self.map_backward(p, t)?;
            Ok(inverse(&self.jacobian(x, t)?))
        };
        let x = self.map_backward(y, t)?;
        let dydx = self.jacobian(x, t)?;
        // d2x[l][i][j] = d^2 x_l / dy_i dy_j
        let mut d2x = [[[0.0; 2]; 2]; 2];
        for i in 0..2 {
            let mut e = Vec2::zeros();
            e[i] = h;
            let diff = (dxdy(y + e)? - dxdy(y - e)?) / (2.0 * h);
            for l in 0..2 {
                for j in 0..2 {
                    d2x[l][i][j] = diff[(l, j)];
                }
            }
        }
        let mut g = [[[0.0; 2]; 2]; 2];
        for (k, gk) in g.iter_mut().enumerate() {
            for (i, gki) in gk.iter_mut().enumerate() {
                for (j, gkij) in gki.iter_mut().enumerate() {
                    *gkij = (0..2).map(|l| dydx[(k, l)] * 0.5 * (d2x[l][i][j] + d2x[l][j][i])).sum();
                }
            }
        }
        Ok(g)
    }

    /// Signed distance to `dOmega_t`, positive inside (so `eta = -grad gamma`).
    /// Available for the built-in kinds only.
    pub fn signed_distance(&self, x: Vec2, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let (center, angle, a, b) = match &self.kind {
            MotionKind::Identity => (Vec2::zeros(), 0.0, 1.0, 1.0),
            MotionKind::Translation { cx, cy } => {
                (Vec2::new(cx.value(t), cy.value(t)), 0.0, 1.0, 1.0)
            }
            MotionKind::Stretch { a } => {
                let av = a.value(t);
                (Vec2::zeros(), 0.0, av.exp(), (-av).exp())
            }
            MotionKind::RotatingEllipse { ax, ay, phi } => (Vec2::zeros(), phi.value(t), *ax, *ay),
            MotionKind::PlugIn(_) => {
                return Err(FlowError::Unsupported(
                    "signed distance is only available for built-in motions".into(),
                ))
            }
        };
        let p = rotation(-angle) * (x - center);
        Ok(ellipse_signed_distance(p, a, b))
    }
}

/// Signed distance from `p` to the axis-aligned ellipse with semi-axes
/// `(a, b)`, positive inside. Nearest point found by Newton iteration on
/// the boundary parameter (tolerance 1e-12, at most 50 iterations).
pub fn ellipse_signed_distance(p: Vec2, a: f64, b: f64) -> f64 {
    let inside = (p[0] / a).powi(2) + (p[1] / b).powi(2) < 1.0;
    if (a - b).abs() < 1e-15 {
        return a - p.norm();
    }
    // deep interior points have several normals to the boundary; start
    // from the radial guess and the four vertices and keep the nearest
    let guess = (p[1] / b).atan2(p[0] / a);
    let mut d = f64::INFINITY;
    for s0 in [guess, 0.0, 0.5 * PI, PI, 1.5 * PI] {
        let mut s = s0;
        for _ in 0..50 {
            let (sn, cs) = s.sin_cos();
            let q = Vec2::new(a * cs, b * sn);
            let dq = Vec2::new(-a * sn, b * cs);
            let r = q - p;
            let step = r.dot(&dq) / (dq.dot(&dq) - r.dot(&q));
            s -= step;
            if step.abs() < 1e-12 {
                break;
            }
        }
        d = d.min((Vec2::new(a * s.cos(), b * s.sin()) - p).norm());
    }
    if inside {
        d
    } else {
        -d
    }
}

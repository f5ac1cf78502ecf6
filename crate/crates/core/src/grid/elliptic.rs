//! Constant-coefficient elliptic operators `q^{jk} d_j d_k` on the reference
//! disk and their Dirichlet and Neumann solvers.
//!
//! With `s = tr(q)/2` the operator splits as `s * Laplacian` plus an
//! anisotropic remainder `c2 * A + s2 * B` where
//! `A = f_rr - f_r/r - f_thth/r^2` and `B = 2 f_th/r^2 - 2 f_rth/r`. The
//! Laplacian uses the conservative five-point polar stencil; `A` and `B`
//! are centered differences. Isotropic problems are solved directly by an
//! angular FFT and one tridiagonal solve per mode; anisotropic ones by
//! GMRES preconditioned with that direct solver.

use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::krylov::gmres;
use super::{Grid, ScalarField, TRACE_WEIGHTS};
use crate::error::{FlowError, Result};
use crate::motion::Mat2;

const GMRES_RESTART: usize = 40;
const GMRES_TOL: f64 = 1e-10;
const GMRES_MAX_ITER: usize = 500;

/// Boundary treatment at `r = 1`, realized through a ghost row.
#[derive(Debug, Clone, Copy)]
pub enum BoundaryRule<'a> {
    /// `f = data` with a quadratic ghost (second-order boundary value).
    Dirichlet(&'a [f64]),
    /// `f = data` with a linear ghost; keeps the Laplacian an M-matrix.
    DirichletLinear(&'a [f64]),
    /// Conormal data `yhat . q grad f = data`.
    Neumann(&'a [f64]),
    /// Cubic extrapolation, no boundary condition imposed.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ghost {
    Quadratic,
    Linear,
    Neumann,
    Free,
}

impl<'a> BoundaryRule<'a> {
    fn split(self) -> (Ghost, Option<&'a [f64]>) {
        match self {
            BoundaryRule::Dirichlet(d) => (Ghost::Quadratic, Some(d)),
            BoundaryRule::DirichletLinear(d) => (Ghost::Linear, Some(d)),
            BoundaryRule::Neumann(d) => (Ghost::Neumann, Some(d)),
            BoundaryRule::Free => (Ghost::Free, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirichletBackend {
    /// Direct solver when `q` is isotropic, GMRES otherwise.
    #[default]
    Auto,
    /// Direct solver; fails for anisotropic `q`.
    Fast,
    /// GMRES even when `q` is isotropic.
    Iterative,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DirichletOptions<'a> {
    pub backend: DirichletBackend,
    /// Starting iterate for the GMRES path.
    pub initial_guess: Option<&'a ScalarField>,
}

fn check_spd(q: &Mat2) -> Result<()> {
    let scale = q.abs().max();
    let finite = q.iter().all(|v| v.is_finite());
    let symmetric = (q[(0, 1)] - q[(1, 0)]).abs() <= 1e-12 * scale;
    let det = q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(1, 0)];
    if finite && symmetric && q[(0, 0)] > 0.0 && det > 0.0 {
        Ok(())
    } else {
        Err(FlowError::Argument(format!(
            "coefficient matrix must be symmetric positive definite, got {q:?}"
        )))
    }
}

/// Isotropic part `s` and the anisotropic parameters `(d, q12)`.
fn split_coefficients(q: &Mat2) -> (f64, f64, f64) {
    (
        0.5 * (q[(0, 0)] + q[(1, 1)]),
        0.5 * (q[(0, 0)] - q[(1, 1)]),
        0.5 * (q[(0, 1)] + q[(1, 0)]),
    )
}

fn is_isotropic(q: &Mat2) -> bool {
    let (s, d, q12) = split_coefficients(q);
    d.abs() <= 1e-14 * s && q12.abs() <= 1e-14 * s
}

/// Constant-coefficient operator `sigma + tau * q^{jk} d_j d_k`.
struct Operator {
    grid: Grid,
    sigma: f64,
    tau: f64,
    s: f64,
    /// Per angle: (c2, s2) of the anisotropic remainder.
    aniso: Option<Vec<(f64, f64)>>,
}

impl Operator {
    fn new(grid: Grid, q: &Mat2, sigma: f64, tau: f64) -> Self {
        let (s, d, q12) = split_coefficients(q);
        let aniso = (!is_isotropic(q)).then(|| {
            (0..grid.n_theta())
                .map(|j| {
                    let (sn, cs) = (2.0 * grid.angle(j)).sin_cos();
                    (d * cs + q12 * sn, d * sn - q12 * cs)
                })
                .collect()
        });
        Self {
            grid,
            sigma,
            tau,
            s,
            aniso,
        }
    }

    /// `(Q_rr, Q_rtheta)` at boundary angle `j`.
    fn conormal(&self, j: usize) -> (f64, f64) {
        match &self.aniso {
            Some(a) => (self.s + a[j].0, -a[j].1),
            None => (self.s, 0.0),
        }
    }

    /// Copies `f` into rows `-1 ..= n_r` with the origin shift and the
    /// boundary ghost filled in.
    fn pad(&self, f: &[f64], ghost: Ghost, data: Option<&[f64]>) -> Vec<f64> {
        let g = self.grid;
        let (n, nt) = (g.n_r(), g.n_theta());
        let mut p = vec![0.0; (n + 2) * nt];
        p[nt..(n + 1) * nt].copy_from_slice(f);
        for j in 0..nt {
            p[j] = f[g.opposite(j)];
        }
        let h = g.h();
        let at = |i: usize, j: usize| f[i * nt + j];
        for j in 0..nt {
            let b = data.map_or(0.0, |d| d[j]);
            let v = match ghost {
                Ghost::Quadratic => at(n - 2, j) / 3.0 - 2.0 * at(n - 1, j) + 8.0 * b / 3.0,
                Ghost::Linear => 2.0 * b - at(n - 1, j),
                Ghost::Free => 3.0 * at(n - 1, j) - 3.0 * at(n - 2, j) + at(n - 3, j),
                Ghost::Neumann => {
                    let (qrr, qrt) = self.conormal(j);
                    let ft = if qrt == 0.0 {
                        0.0
                    } else {
                        let row = |jj: usize| {
                            TRACE_WEIGHTS[0] * at(n - 3, jj)
                                + TRACE_WEIGHTS[1] * at(n - 2, jj)
                                + TRACE_WEIGHTS[2] * at(n - 1, jj)
                        };
                        (row(g.jp(j)) - row(g.jm(j))) / g.chord1()
                    };
                    at(n - 1, j) + h * (b - qrt * ft) / qrr
                }
            };
            p[(n + 1) * nt + j] = v;
        }
        p
    }

    fn apply(&self, f: &[f64], ghost: Ghost, data: Option<&[f64]>, out: &mut [f64]) {
        let g = self.grid;
        let (n, nt) = (g.n_r(), g.n_theta());
        let p = self.pad(f, ghost, data);
        let h = g.h();
        let (c1, c2) = (g.chord1(), g.chord2());
        for i in 0..n {
            let r = g.radius(i);
            let (rp, rm) = (g.face(i + 1), g.face(i));
            let row = (i + 1) * nt;
            let (up, dn) = (row + nt, row - nt);
            for j in 0..nt {
                let (jp, jm) = (g.jp(j), g.jm(j));
                let f0 = p[row + j];
                let ftt = (p[row + jp] - 2.0 * f0 + p[row + jm]) / c2;
                let lap = (rp * (p[up + j] - f0) - rm * (f0 - p[dn + j])) / (r * h * h)
                    + ftt / (r * r);
                let mut l = self.s * lap;
                if let Some(a) = &self.aniso {
                    let frr = (p[up + j] - 2.0 * f0 + p[dn + j]) / (h * h);
                    let fr = (p[up + j] - p[dn + j]) / (2.0 * h);
                    let ft = (p[row + jp] - p[row + jm]) / c1;
                    let frt = (p[up + jp] - p[up + jm] - p[dn + jp] + p[dn + jm]) / (2.0 * h * c1);
                    let am = frr - fr / r - ftt / (r * r);
                    let bm = 2.0 * ft / (r * r) - 2.0 * frt / r;
                    l += a[j].0 * am + a[j].1 * bm;
                }
                out[i * nt + j] = self.sigma * f0 + self.tau * l;
            }
        }
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static P: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    P.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut p = planner().lock().unwrap_or_else(|e| e.into_inner());
    (p.plan_fft_forward(n), p.plan_fft_inverse(n))
}

/// Direct solve of `(sigma + k * Laplacian) f = rhs` for `q = (k / tau) I`.
/// For a singular Neumann problem the mean of the data is removed first and
/// returned as `lambda` (so `L f = rhs - lambda`), and `f` has zero mean.
fn fast_solve(
    grid: Grid,
    sigma: f64,
    k: f64,
    rhs: &[f64],
    ghost: Ghost,
    data: Option<&[f64]>,
) -> (Vec<f64>, f64) {
    debug_assert!(ghost != Ghost::Free);
    let (n, nt) = (grid.n_r(), grid.n_theta());
    let (fwd, inv) = plans(nt);
    let h = grid.h();
    let mut spec: Vec<Complex<f64>> = rhs.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in spec.chunks_mut(nt) {
        fwd.process(row);
    }
    let mut bspec: Vec<Complex<f64>> = match data {
        Some(d) => d.iter().map(|&v| Complex::new(v, 0.0)).collect(),
        None => vec![Complex::new(0.0, 0.0); nt],
    };
    fwd.process(&mut bspec);

    // ghost f_N = alpha f_{N-1} + beta f_{N-2} + gamma * data
    let (alpha, beta, gamma) = match ghost {
        Ghost::Quadratic => (-2.0, 1.0 / 3.0, 8.0 / 3.0),
        Ghost::Linear => (-1.0, 0.0, 2.0),
        // Neumann solves always have tau = 1, so k = s
        Ghost::Neumann => (1.0, 0.0, h / k),
        Ghost::Free => unreachable!(),
    };
    let singular = ghost == Ghost::Neumann && sigma == 0.0;
    let c2 = grid.chord2();
    let mut lambda = 0.0;
    let mut lower = vec![0.0; n];
    let mut diag = vec![Complex::new(0.0, 0.0); n];
    let mut upper = vec![0.0; n];
    let mut b = vec![Complex::new(0.0, 0.0); n];
    for m in 0..nt {
        let sm = (std::f64::consts::PI * m as f64 / nt as f64).sin();
        let mu = -4.0 * sm * sm / c2;
        for i in 0..n {
            let r = grid.radius(i);
            let lo = k * grid.face(i) / (r * h * h);
            let up = k * grid.face(i + 1) / (r * h * h);
            lower[i] = lo;
            upper[i] = up;
            diag[i] = Complex::new(sigma - lo - up + k * mu / (r * r), 0.0);
            b[i] = spec[i * nt + m];
        }
        let up = upper[n - 1];
        diag[n - 1] += up * alpha;
        lower[n - 1] += up * beta;
        b[n - 1] -= bspec[m] * (up * gamma);
        upper[n - 1] = 0.0;
        if singular && m == 0 {
            let wsum: f64 = (0..n).map(|i| grid.radius(i)).sum();
            let lam: f64 = (0..n).map(|i| grid.radius(i) * b[i].re).sum::<f64>() / wsum;
            lambda = lam / nt as f64;
            for bi in b.iter_mut() {
                bi.re -= lam;
            }
            // pin the innermost ring; the dropped equation is implied
            diag[0] = Complex::new(1.0, 0.0);
            upper[0] = 0.0;
            b[0] = Complex::new(0.0, 0.0);
        }
        thomas(&lower, &mut diag, &upper, &mut b);
        for i in 0..n {
            spec[i * nt + m] = b[i];
        }
    }
    for row in spec.chunks_mut(nt) {
        inv.process(row);
    }
    let scale = 1.0 / nt as f64;
    let mut f: Vec<f64> = spec.iter().map(|c| c.re * scale).collect();
    if singular {
        let mean = ScalarField::from_values(grid, f.clone()).map_or(0.0, |s| s.mean());
        f.iter_mut().for_each(|v| *v -= mean);
    }
    (f, lambda)
}

/// Tridiagonal solve in place; the solution overwrites `b`.
fn thomas(lower: &[f64], diag: &mut [Complex<f64>], upper: &[f64], b: &mut [Complex<f64>]) {
    let n = b.len();
    for i in 1..n {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        let prev = b[i - 1];
        b[i] -= w * prev;
    }
    b[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        let next = b[i + 1];
        b[i] = (b[i] - next * upper[i]) / diag[i];
    }
}

/// `q^{jk} d_j d_k f` with cubic extrapolation at the boundary.
pub fn elliptic_apply(q: &Mat2, f: &ScalarField) -> Result<ScalarField> {
    elliptic_apply_with(q, f, BoundaryRule::Free)
}

/// `q^{jk} d_j d_k f` with the given boundary ghost.
pub fn elliptic_apply_with(q: &Mat2, f: &ScalarField, rule: BoundaryRule) -> Result<ScalarField> {
    check_spd(q)?;
    let g = f.grid();
    let (ghost, data) = rule.split();
    check_data(g, data)?;
    let op = Operator::new(g, q, 0.0, 1.0);
    let mut out = ScalarField::zeros(g);
    op.apply(&f.values, ghost, data, &mut out.values);
    Ok(out)
}

fn check_data(g: Grid, data: Option<&[f64]>) -> Result<()> {
    if let Some(d) = data {
        if d.len() != g.n_theta() {
            return Err(FlowError::Argument(format!(
                "boundary profile has {} values, grid has {} angles",
                d.len(),
                g.n_theta()
            )));
        }
        if !d.iter().all(|v| v.is_finite()) {
            return Err(FlowError::NonFinite("boundary profile"));
        }
    }
    Ok(())
}

/// Solves `q^{jk} d_j d_k f = rhs` with `f = boundary` on `r = 1`.
pub fn solve_dirichlet(q: &Mat2, rhs: &ScalarField, boundary: &[f64]) -> Result<ScalarField> {
    solve_dirichlet_with(q, rhs, boundary, DirichletOptions::default())
}

pub fn solve_dirichlet_with(
    q: &Mat2,
    rhs: &ScalarField,
    boundary: &[f64],
    opts: DirichletOptions,
) -> Result<ScalarField> {
    solve_general(q, 0.0, 1.0, rhs, BoundaryRule::Dirichlet(boundary), opts)
}

/// Solves `(sigma + tau q^{jk} d_j d_k) f = rhs` with Dirichlet data
/// imposed through a linear ghost, as used by implicit diffusion steps.
pub fn solve_helmholtz_dirichlet(
    q: &Mat2,
    sigma: f64,
    tau: f64,
    rhs: &ScalarField,
    boundary: &[f64],
    opts: DirichletOptions,
) -> Result<ScalarField> {
    solve_general(q, sigma, tau, rhs, BoundaryRule::DirichletLinear(boundary), opts)
}

fn solve_general(
    q: &Mat2,
    sigma: f64,
    tau: f64,
    rhs: &ScalarField,
    rule: BoundaryRule,
    opts: DirichletOptions,
) -> Result<ScalarField> {
    check_spd(q)?;
    rhs.ensure_finite("elliptic right-hand side")?;
    let g = rhs.grid();
    let (ghost, data) = rule.split();
    check_data(g, data)?;
    let op = Operator::new(g, q, sigma, tau);
    let iso = op.aniso.is_none();
    let use_fast = match opts.backend {
        DirichletBackend::Auto => iso,
        DirichletBackend::Fast if !iso => {
            return Err(FlowError::Unsupported(
                "direct elliptic solver needs an isotropic coefficient matrix".into(),
            ))
        }
        DirichletBackend::Fast => true,
        DirichletBackend::Iterative => false,
    };
    let k = tau * op.s;
    let values = if use_fast {
        fast_solve(g, sigma, k, &rhs.values, ghost, data).0
    } else {
        let n = g.len();
        let mut offset = vec![0.0; n];
        op.apply(&vec![0.0; n], ghost, data, &mut offset);
        let b: Vec<f64> = rhs.values.iter().zip(&offset).map(|(r, o)| r - o).collect();
        let mut x = match opts.initial_guess {
            Some(f0) if f0.grid() == g => f0.values.clone(),
            _ => vec![0.0; n],
        };
        let w = disk_weights(g);
        let b: Vec<f64> = b.iter().zip(&w).map(|(v, w)| v * w).collect();
        let mut tmp = vec![0.0; n];
        gmres(
            |v, out| {
                op.apply(v, ghost, None, out);
                out.iter_mut().zip(&w).for_each(|(o, w)| *o *= w);
            },
            |v, out| {
                tmp.iter_mut().zip(v.iter().zip(&w)).for_each(|(t, (v, w))| *t = v / w);
                out.copy_from_slice(&fast_solve(g, sigma, k, &tmp, ghost, None).0)
            },
            &b,
            &mut x,
            GMRES_RESTART,
            GMRES_TOL,
            GMRES_MAX_ITER,
        )?;
        x
    };
    let f = ScalarField::from_values(g, values)?;
    f.ensure_finite("elliptic solution")?;
    Ok(f)
}

/// Row weights `sqrt(r_i)`, so GMRES measures residuals in the area-weighted
/// disk norm; the unweighted norm over-counts the tiny cells at the origin,
/// whose round-off floor sits above the tolerance on fine grids.
fn disk_weights(g: Grid) -> Vec<f64> {
    (0..g.n_r())
        .flat_map(|i| std::iter::repeat_n(g.radius(i).sqrt(), g.n_theta()))
        .collect()
}

/// Solves `q^{jk} d_j d_k f = rhs` with conormal data
/// `yhat . q grad f = flux` on `r = 1`; the result has zero mean.
///
/// The data must satisfy `oint flux dtheta = int rhs dA` (divergence
/// theorem); the discrete defect left after that check is projected out.
pub fn solve_neumann(q: &Mat2, rhs: &ScalarField, flux: &[f64]) -> Result<ScalarField> {
    check_spd(q)?;
    rhs.ensure_finite("elliptic right-hand side")?;
    let g = rhs.grid();
    check_data(g, Some(flux))?;
    let dth = g.dtheta();
    let boundary: f64 = flux.iter().sum::<f64>() * dth;
    let abs_scale = flux.iter().map(|v| v.abs()).sum::<f64>() * dth + rhs.map(f64::abs).integral();
    let defect = boundary - rhs.integral();
    if defect.abs() > 1e-8 * (1.0 + abs_scale) {
        return Err(FlowError::IncompatibleFlux { defect });
    }
    let op = Operator::new(g, q, 0.0, 1.0);
    let k = op.s;
    if op.aniso.is_none() {
        let (f, _) = fast_solve(g, 0.0, k, &rhs.values, Ghost::Neumann, Some(flux));
        return ScalarField::from_values(g, f);
    }
    // bordered system [L 1; w^T 0] (f, lambda) = (rhs - L(0; flux), 0)
    let n = g.len();
    let mut offset = vec![0.0; n];
    op.apply(&vec![0.0; n], Ghost::Neumann, Some(flux), &mut offset);
    let w = disk_weights(g);
    let mut b: Vec<f64> = rhs.values.iter().zip(&offset).zip(&w).map(|((r, o), w)| (r - o) * w).collect();
    b.push(0.0);
    let mut tmp = vec![0.0; n];
    let mean = |v: &[f64]| ScalarField::from_values(g, v.to_vec()).map_or(0.0, |s| s.mean());
    let mut x = vec![0.0; n + 1];
    gmres(
        |v, out| {
            op.apply(&v[..n], Ghost::Neumann, None, &mut out[..n]);
            out[..n].iter_mut().zip(&w).for_each(|(o, w)| *o = (*o + v[n]) * w);
            out[n] = mean(&v[..n]);
        },
        |v, out| {
            tmp.iter_mut().zip(v.iter().zip(&w)).for_each(|(t, (v, w))| *t = v / w);
            let (f, lam) = fast_solve(g, 0.0, k, &tmp, Ghost::Neumann, None);
            for (o, fi) in out[..n].iter_mut().zip(&f) {
                *o = fi + v[n];
            }
            out[n] = lam;
        },
        &b,
        &mut x,
        GMRES_RESTART,
        GMRES_TOL,
        GMRES_MAX_ITER,
    )?;
    x.truncate(n);
    let mut f = ScalarField::from_values(g, x)?;
    let m = f.mean();
    f.values.iter_mut().for_each(|v| *v -= m);
    f.ensure_finite("elliptic solution")?;
    Ok(f)
}

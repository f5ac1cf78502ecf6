//! Cell-centered polar grid on the reference disk, fields living on it, and
//! the discrete operators every other module is built from.
//!
//! Cell `(i, j)` sits at `r_i = (i + 1/2) h`, `theta_j = j dtheta` with
//! `h = 1 / n_r`. Values are stored radius-major, `values[i * n_theta + j]`.
//! The point `(-r, theta)` is `(r, theta + pi)`, which supplies the ghost
//! row below `i = 0`.

mod elliptic;
mod krylov;
mod snapshot;

pub use elliptic::{
    elliptic_apply, elliptic_apply_with, solve_dirichlet, solve_dirichlet_with, solve_helmholtz_dirichlet,
    solve_neumann, BoundaryRule, DirichletBackend, DirichletOptions,
};
pub use krylov::{gmres, GmresReport};
pub use snapshot::{load_snapshot, read_snapshot, save_snapshot, write_snapshot, SNAPSHOT_MAGIC};

use std::f64::consts::PI;

use crate::error::{FlowError, Result};
use crate::motion::Vec2;

/// Extrapolation weights to `r = 1` from rows `n_r - 3 .. n_r - 1`.
pub(crate) const TRACE_WEIGHTS: [f64; 3] = [0.375, -1.25, 1.875];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n_r: usize,
    n_theta: usize,
}

impl Grid {
    pub fn new(n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r < 4 {
            return Err(FlowError::Argument(format!("n_r must be at least 4, got {n_r}")));
        }
        if n_theta < 4 || !n_theta.is_multiple_of(2) {
            return Err(FlowError::Argument(format!(
                "n_theta must be even and at least 4, got {n_theta}"
            )));
        }
        Ok(Self { n_r, n_theta })
    }

    #[inline]
    pub fn n_r(&self) -> usize {
        self.n_r
    }

    #[inline]
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Radial spacing.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n_r as f64
    }

    #[inline]
    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    #[inline]
    pub fn radius(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n_r as f64
    }

    /// Radius of the face between rows `i - 1` and `i` (`face(0) = 0`).
    #[inline]
    pub fn face(&self, i: usize) -> f64 {
        i as f64 / self.n_r as f64
    }

    #[inline]
    pub fn angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_theta as f64
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    #[inline]
    pub fn jp(&self, j: usize) -> usize {
        if j + 1 == self.n_theta {
            0
        } else {
            j + 1
        }
    }

    #[inline]
    pub fn jm(&self, j: usize) -> usize {
        if j == 0 {
            self.n_theta - 1
        } else {
            j - 1
        }
    }

    /// Angular index of the point diametrically opposite.
    #[inline]
    pub fn opposite(&self, j: usize) -> usize {
        (j + self.n_theta / 2) % self.n_theta
    }

    /// Reference Cartesian coordinates of cell `(i, j)`.
    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        let (s, c) = self.angle(j).sin_cos();
        self.radius(i) * Vec2::new(c, s)
    }

    /// Area of cell `(i, j)`; the weights sum to `pi` exactly.
    #[inline]
    pub fn area(&self, i: usize) -> f64 {
        self.radius(i) * self.h() * self.dtheta()
    }

    /// `4 sin^2(dtheta / 2)`: the angular second difference is divided by
    /// this instead of `dtheta^2`, which makes it exact on `cos theta`.
    #[inline]
    pub(crate) fn chord2(&self) -> f64 {
        let s = (0.5 * self.dtheta()).sin();
        4.0 * s * s
    }

    /// `2 sin(dtheta)`: denominator of the centered angular first difference.
    #[inline]
    pub(crate) fn chord1(&self) -> f64 {
        2.0 * self.dtheta().sin()
    }

    pub fn boundary_angles(&self) -> Vec<f64> {
        (0..self.n_theta).map(|j| self.angle(j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FlowError::Argument(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(r, theta)` at the cell centers.
    pub fn from_polar(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_r {
            for j in 0..grid.n_theta {
                values.push(f(grid.radius(i), grid.angle(j)));
            }
        }
        Self { grid, values }
    }

    /// Samples `f(y1, y2)` at the cell centers.
    pub fn from_cartesian(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_polar(grid, |r, th| f(r * th.cos(), r * th.sin()))
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(FlowError::NonFinite(what))
        }
    }

    /// `int f dA` by the cell midpoint rule.
    pub fn integral(&self) -> f64 {
        let g = self.grid;
        let mut s = 0.0;
        for i in 0..g.n_r {
            let row: f64 = self.values[i * g.n_theta..(i + 1) * g.n_theta].iter().sum();
            s += row * g.area(i);
        }
        s
    }

    /// Area-weighted mean.
    pub fn mean(&self) -> f64 {
        self.integral() / PI
    }

    /// Values extrapolated quadratically to `r = 1`.
    pub fn boundary_trace(&self) -> Vec<f64> {
        let g = self.grid;
        let n = g.n_r;
        (0..g.n_theta)
            .map(|j| {
                TRACE_WEIGHTS[0] * self.at(n - 3, j)
                    + TRACE_WEIGHTS[1] * self.at(n - 2, j)
                    + TRACE_WEIGHTS[2] * self.at(n - 1, j)
            })
            .collect()
    }
}

/// Cartesian components in reference coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            x: vec![0.0; grid.len()],
            y: vec![0.0; grid.len()],
        }
    }

    pub fn from_cartesian(grid: Grid, f: impl Fn(f64, f64) -> Vec2) -> Self {
        let mut v = Self::zeros(grid);
        for i in 0..grid.n_r {
            for j in 0..grid.n_theta {
                let p = grid.point(i, j);
                let w = f(p[0], p[1]);
                let k = grid.idx(i, j);
                v.x[k] = w[0];
                v.y[k] = w[1];
            }
        }
        v
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Vec2 {
        let k = self.grid.idx(i, j);
        Vec2::new(self.x[k], self.y[k])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Vec2) {
        let k = self.grid.idx(i, j);
        self.x[k] = v[0];
        self.y[k] = v[1];
    }

    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: if c == 0 { self.x.clone() } else { self.y.clone() },
        }
    }

    /// Pointwise Euclidean norm.
    pub fn magnitude(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.x.iter().zip(&self.y).map(|(a, b)| a.hypot(*b)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..self.x.len() {
            m = m.max((self.x[k] - other.x[k]).hypot(self.y[k] - other.y[k]));
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

/// Polar derivatives `(f_r, f_theta)` at cell `(i, j)`: centered in both
/// directions, across the origin for `i = 0`, one-sided second order on the
/// outermost ring.
#[inline]
pub(crate) fn polar_derivatives(f: &ScalarField, i: usize, j: usize) -> (f64, f64) {
    let g = f.grid;
    let h = g.h();
    let n = g.n_r;
    let fr = if i == 0 {
        (f.at(1, j) - f.at(0, g.opposite(j))) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * f.at(n - 1, j) - 4.0 * f.at(n - 2, j) + f.at(n - 3, j)) / (2.0 * h)
    } else {
        (f.at(i + 1, j) - f.at(i - 1, j)) / (2.0 * h)
    };
    let ft = (f.at(i, g.jp(j)) - f.at(i, g.jm(j))) / g.chord1();
    (fr, ft)
}

/// Reference gradient in Cartesian components.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let mut out = VectorField::zeros(g);
    for i in 0..g.n_r {
        let r = g.radius(i);
        for j in 0..g.n_theta {
            let (fr, ft) = polar_derivatives(f, i, j);
            let (s, c) = g.angle(j).sin_cos();
            let k = g.idx(i, j);
            out.x[k] = fr * c - ft / r * s;
            out.y[k] = fr * s + ft / r * c;
        }
    }
    out
}

/// `(int |f|^p dA)^(1/p)`, or `max |f|` for `p = inf`.
pub fn integrate(f: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(FlowError::Argument(format!("norm exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let g = f.grid;
    let mut s = 0.0;
    for i in 0..g.n_r {
        let row: f64 = f.values[i * g.n_theta..(i + 1) * g.n_theta]
            .iter()
            .map(|v| v.abs().powf(p))
            .sum();
        s += row * g.area(i);
    }
    Ok(s.powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Grid::new(16, 31).is_err());
        assert!(Grid::new(2, 32).is_err());
        let g = Grid::new(16, 32).unwrap();
        assert!((0..16).all(|i| g.radius(i) > 0.0 && g.radius(i) < 1.0));
        let total: f64 = (0..16).map(|i| g.area(i) * 32.0).sum();
        assert!((total - PI).abs() < 1e-13);
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let g = Grid::new(32, 64).unwrap();
        let c = ScalarField::constant(g, 3.0);
        let gc = gradient(&c);
        assert!(gc.x.iter().chain(&gc.y).all(|v| v.abs() < 1e-12));
        let f = ScalarField::from_cartesian(g, |y1, _| y1);
        let gf = gradient(&f);
        for k in 0..g.len() {
            assert!((gf.x[k] - 1.0).abs() < 1e-10 && gf.y[k].abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_second_order() {
        let err = |n: usize| {
            let g = Grid::new(n, 2 * n).unwrap();
            let f = ScalarField::from_polar(g, |r, t| r * r * t.sin() * t.cos());
            let gf = gradient(&f);
            let exact = VectorField::from_cartesian(g, |y1, y2| Vec2::new(y2, y1));
            gf.max_abs_diff(&exact)
        };
        let ratio = err(64) / err(128);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn integrate_examples() {
        let g = Grid::new(128, 256).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert!((integrate(&one, 2.0).unwrap() - PI.sqrt()).abs() < 1e-4);
        let c = ScalarField::constant(g, -2.5);
        assert_eq!(integrate(&c, f64::INFINITY).unwrap(), 2.5);
        let f = ScalarField::from_polar(g, |r, _| 1.0 - r * r);
        assert!((integrate(&f, 2.0).unwrap() - (PI / 3.0).sqrt()).abs() < 1e-4);
        assert!(integrate(&f, 0.5).is_err());
    }

    #[test]
    fn boundary_trace_exact_on_quadratics() {
        let g = Grid::new(16, 32).unwrap();
        let f = ScalarField::from_polar(g, |r, t| (1.0 + r - 2.0 * r * r) * t.cos());
        for (j, v) in f.boundary_trace().iter().enumerate() {
            assert!((v - 0.0 * g.angle(j)).abs() < 1e-12);
        }
    }
}

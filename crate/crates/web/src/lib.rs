//! wasm-bindgen front end for the static page in `www/`.
//!
//! Three operations: trace the moving domain and its material mesh, run a
//! small vorticity simulation and raster it in physical coordinates, and
//! sample the potential correction `rho`. The plain functions return
//! `Result<_, String>` so they can be tested natively; the exported wrappers
//! turn errors into JS exceptions.

use std::f64::consts::PI;

use mdflow::diagnostics::record;
use mdflow::grid::Grid;
use mdflow::homogenize::{analytic_rho, analytic_rho_at, numerical_rho};
use mdflow::motion::{MotionSpec, TimeFn, Vec2};
use mdflow::solver::{Forcing, InitialPreset, SolverState, StepConfig};
use wasm_bindgen::prelude::*;

/// Horizon given to demo motions; the page never runs this far.
const HORIZON: f64 = 1000.0;

fn time_fn(src: &str) -> Result<TimeFn, String> {
    TimeFn::parse(src).map_err(|e| format!("`{src}`: {e}"))
}

/// `p1`, `p2` are per kind: translation `cx`, `cy`; stretch `a`;
/// rotating ellipse `ax` (a number) and `phi`.
pub fn build_motion(kind: &str, p1: &str, p2: &str) -> Result<MotionSpec, String> {
    let m = match kind {
        "identity" => Ok(MotionSpec::identity(HORIZON)),
        "translation" => MotionSpec::translation(time_fn(p1)?, time_fn(p2)?, HORIZON),
        "stretch" => MotionSpec::stretch(time_fn(p1)?, HORIZON),
        "rotating_ellipse" => {
            let ax: f64 = p1.trim().parse().map_err(|_| format!("`{p1}` is not a number"))?;
            MotionSpec::rotating_ellipse(ax, 1.0 / ax, time_fn(p2)?, HORIZON)
        }
        other => return Err(format!("unknown motion kind `{other}`")),
    };
    m.map_err(|e| e.to_string())
}

/// Boundary and material mesh lines of the domain at time `t`, as flat
/// `x, y` pairs with a `NaN, NaN` pair between polylines. The first
/// polyline is the boundary.
pub fn domain_lines(m: &MotionSpec, t: f64, rings: usize, spokes: usize) -> Result<Vec<f64>, String> {
    let seg = 96;
    let mut out = Vec::new();
    let push = |y: Vec2, out: &mut Vec<f64>| -> Result<(), String> {
        let x = m.map_backward(y, t).map_err(|e| e.to_string())?;
        out.extend_from_slice(&[x[0], x[1]]);
        Ok(())
    };
    for k in (1..=rings).rev() {
        let r = k as f64 / rings as f64;
        for s in 0..=seg {
            let a = 2.0 * PI * s as f64 / seg as f64;
            push(Vec2::new(r * a.cos(), r * a.sin()), &mut out)?;
        }
        out.extend_from_slice(&[f64::NAN, f64::NAN]);
    }
    for k in 0..spokes {
        let a = 2.0 * PI * k as f64 / spokes as f64;
        for s in 0..=seg / 4 {
            let r = s as f64 / (seg / 4) as f64;
            push(Vec2::new(r * a.cos(), r * a.sin()), &mut out)?;
        }
        out.extend_from_slice(&[f64::NAN, f64::NAN]);
    }
    Ok(out)
}

/// `rho` on a `side x side` lattice over `[-extent, extent]^2`, as
/// `x, y, rho_x, rho_y` quadruples for points inside the domain, plus the
/// largest gap between the grid solve and the closed form (last entry).
pub fn rho_samples(m: &MotionSpec, t: f64, side: usize, extent: f64, n_r: usize) -> Result<Vec<f64>, String> {
    let err = |e: mdflow::FlowError| e.to_string();
    let mut out = Vec::new();
    for a in 0..side {
        for b in 0..side {
            let x = Vec2::new(
                extent * (2.0 * (a as f64 + 0.5) / side as f64 - 1.0),
                extent * (2.0 * (b as f64 + 0.5) / side as f64 - 1.0),
            );
            if m.signed_distance(x, t).map_err(err)? >= 0.0 {
                continue;
            }
            let (_, r) = analytic_rho_at(m, x, t).map_err(err)?;
            out.extend_from_slice(&[x[0], x[1], r[0], r[1]]);
        }
    }
    let g = Grid::new(n_r, 2 * n_r).map_err(err)?;
    let exact = analytic_rho(m, t, g).map_err(err)?;
    let num = numerical_rho(m, t, g).map_err(err)?;
    out.push(num.rho.max_abs_diff(&exact.rho));
    Ok(out)
}

pub fn preset(name: &str) -> Result<InitialPreset, String> {
    Ok(match name {
        "bessel_mode" => InitialPreset::BesselMode { amplitude: 1.0 },
        "radial_poly" => InitialPreset::RadialPoly { amplitude: 1.0 },
        "offset_bump" => InitialPreset::OffsetBump { amplitude: 1.0, x0: 0.3, y0: 0.1, width: 0.45 },
        "disk_indicator" => InitialPreset::DiskIndicator { amplitude: 1.0, radius: 0.5 },
        other => return Err(format!("unknown preset `{other}`")),
    })
}

/// A running simulation held by the page.
#[wasm_bindgen]
pub struct Simulation {
    state: SolverState,
    cfg: StepConfig,
}

impl Simulation {
    pub fn create(kind: &str, p1: &str, p2: &str, initial: &str, n_r: usize, nu: f64, dt: f64) -> Result<Self, String> {
        let m = build_motion(kind, p1, p2)?;
        let g = Grid::new(n_r, 2 * n_r).map_err(|e| e.to_string())?;
        let w = preset(initial)?.sample(g).map_err(|e| e.to_string())?;
        let state = SolverState::new(m, w, nu, Forcing::Potential).map_err(|e| e.to_string())?;
        Ok(Self { state, cfg: StepConfig::new(dt) })
    }

    pub fn advance(&mut self, steps: usize) -> Result<f64, String> {
        for _ in 0..steps {
            self.state = self.state.step(&self.cfg).map_err(|e| e.to_string())?;
        }
        Ok(self.state.t)
    }

    /// Vorticity on a `px x px` raster of `[-extent, extent]^2`, row-major
    /// from the top; `NaN` outside the domain.
    pub fn raster(&self, px: usize, extent: f64) -> Result<Vec<f64>, String> {
        let s = &self.state;
        let g = s.grid();
        let mut out = vec![f64::NAN; px * px];
        for row in 0..px {
            for col in 0..px {
                let x = Vec2::new(
                    extent * (2.0 * (col as f64 + 0.5) / px as f64 - 1.0),
                    extent * (1.0 - 2.0 * (row as f64 + 0.5) / px as f64),
                );
                let y = s.motion.map_forward(x, s.t).map_err(|e| e.to_string())?;
                let r = y.norm();
                if r >= 1.0 {
                    continue;
                }
                let i = ((r * g.n_r() as f64) as usize).min(g.n_r() - 1);
                let th = y[1].atan2(y[0]).rem_euclid(2.0 * PI);
                let j = (th / g.dtheta()).round() as usize % g.n_theta();
                out[row * px + col] = s.omega.at(i, j);
            }
        }
        Ok(out)
    }

    /// `[L^1.5, L^2, L^4, L^inf]` norms of the current vorticity.
    pub fn lr_norms(&self) -> Result<Vec<f64>, String> {
        record(&self.state).map(|r| r.lr_norms.to_vec()).map_err(|e| e.to_string())
    }
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(constructor)]
    #[allow(clippy::too_many_arguments)]
    pub fn new(kind: &str, p1: &str, p2: &str, initial: &str, n_r: usize, nu: f64, dt: f64) -> Result<Simulation, JsError> {
        Self::create(kind, p1, p2, initial, n_r, nu, dt).map_err(|e| JsError::new(&e))
    }

    pub fn step(&mut self, steps: usize) -> Result<f64, JsError> {
        self.advance(steps).map_err(|e| JsError::new(&e))
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn courant(&self) -> f64 {
        self.state.courant(self.cfg.dt)
    }

    pub fn vorticity(&self, px: usize, extent: f64) -> Result<Vec<f64>, JsError> {
        self.raster(px, extent).map_err(|e| JsError::new(&e))
    }

    pub fn norms(&self) -> Result<Vec<f64>, JsError> {
        self.lr_norms().map_err(|e| JsError::new(&e))
    }
}

#[wasm_bindgen]
pub fn geometry(kind: &str, p1: &str, p2: &str, t: f64) -> Result<Vec<f64>, JsError> {
    let m = build_motion(kind, p1, p2).map_err(|e| JsError::new(&e))?;
    domain_lines(&m, t, 5, 12).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rho_field(kind: &str, p1: &str, p2: &str, t: f64, side: usize, extent: f64) -> Result<Vec<f64>, JsError> {
    let m = build_motion(kind, p1, p2).map_err(|e| JsError::new(&e))?;
    rho_samples(&m, t, side, extent, 24).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outline_lies_on_the_boundary() {
        let m = build_motion("rotating_ellipse", "1.5", "t").unwrap();
        let pts = domain_lines(&m, 0.7, 3, 4).unwrap();
        for p in pts.chunks(2).take(97) {
            let d = m.signed_distance(Vec2::new(p[0], p[1]), 0.7).unwrap();
            assert!(d.abs() < 1e-9, "{d}");
        }
        assert_eq!(pts.iter().filter(|v| v.is_nan()).count(), 2 * (3 + 4));
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(build_motion("spiral", "", "").unwrap_err().contains("spiral"));
        assert!(build_motion("stretch", "sin(", "").is_err());
        assert!(build_motion("rotating_ellipse", "wide", "t").is_err());
        assert!(preset("vortex").is_err());
    }

    #[test]
    fn rho_samples_agree_with_grid_solve() {
        let m = build_motion("stretch", "0.3*sin(t)", "").unwrap();
        let v = rho_samples(&m, 0.5, 10, 1.5, 16).unwrap();
        assert_eq!(v.len() % 4, 1);
        assert!(v.len() > 4 * 40);
        assert!(*v.last().unwrap() < 1e-2);
    }

    #[test]
    fn simulation_decays_and_rasters() {
        let mut s = Simulation::create("translation", "0.3*sin(t)", "0", "bessel_mode", 16, 0.05, 0.01).unwrap();
        let before = s.lr_norms().unwrap();
        let t = s.advance(10).unwrap();
        assert!((t - 0.1).abs() < 1e-12);
        let after = s.lr_norms().unwrap();
        assert!(after.iter().zip(&before).all(|(a, b)| a < b));
        let img = s.raster(20, 1.5).unwrap();
        let inside = img.iter().filter(|v| v.is_finite()).count();
        assert!(inside > 100 && inside < 400);
    }
}

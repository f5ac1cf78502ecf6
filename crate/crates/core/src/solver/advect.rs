//! Conservative finite-volume transport on the polar grid.
//!
//! The reference transport field is `w = J grad(Theta)`, so the flux through
//! any cell face is the difference of `Theta` between its end points. With
//! `Theta` sampled at cell corners the discrete field is exactly
//! divergence-free and carries no flux through `r = 1`.

use super::AdvectionScheme;
use crate::grid::{Grid, ScalarField};

/// Face fluxes of one transport field.
#[derive(Debug, Clone)]
pub(crate) struct Fluxes {
    grid: Grid,
    /// `radial[i * nt + j]`: flux outward through the face at radius
    /// `face(i)` of column `j`, `i = 0..=n_r`.
    radial: Vec<f64>,
    /// `angular[i * nt + j]`: flux from cell `j - 1` into cell `j` of ring `i`.
    angular: Vec<f64>,
}

/// `Theta` at the corners `(face(i), (j - 1/2) dtheta)`, `i = 0..=n_r`, from
/// the stream function at cell centres (zero on `r = 1`) plus the rigid
/// part `swirl * r^2 / 2`.
pub(crate) fn corner_stream(psi: &ScalarField, swirl: f64) -> Vec<f64> {
    let g = psi.grid();
    let (n, nt) = (g.n_r(), g.n_theta());
    let mut c = vec![0.0; (n + 1) * nt];
    let ring0 = psi.values[..nt].iter().sum::<f64>() / nt as f64;
    for j in 0..nt {
        c[j] = ring0;
    }
    for i in 1..n {
        let rr = g.face(i);
        for j in 0..nt {
            let jm = g.jm(j);
            let avg = 0.25 * (psi.at(i - 1, jm) + psi.at(i - 1, j) + psi.at(i, jm) + psi.at(i, j));
            c[i * nt + j] = avg + 0.5 * swirl * rr * rr;
        }
    }
    for j in 0..nt {
        c[n * nt + j] = 0.5 * swirl;
    }
    c
}

impl Fluxes {
    pub(crate) fn from_corners(grid: Grid, corners: &[f64]) -> Self {
        let (n, nt) = (grid.n_r(), grid.n_theta());
        let mut radial = vec![0.0; (n + 1) * nt];
        for i in 0..=n {
            for j in 0..nt {
                radial[i * nt + j] = -(corners[i * nt + grid.jp(j)] - corners[i * nt + j]);
            }
        }
        let mut angular = vec![0.0; n * nt];
        for i in 0..n {
            for j in 0..nt {
                angular[i * nt + j] = corners[(i + 1) * nt + j] - corners[i * nt + j];
            }
        }
        Self {
            grid,
            radial,
            angular,
        }
    }

    /// Largest per-cell Courant number `dt * outflow / area`.
    pub(crate) fn courant(&self, dt: f64) -> f64 {
        let g = self.grid;
        let (n, nt) = (g.n_r(), g.n_theta());
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let area = g.area(i);
            for j in 0..nt {
                let out = self.radial[(i + 1) * nt + j].max(0.0)
                    + (-self.radial[i * nt + j]).max(0.0)
                    + self.angular[i * nt + g.jp(j)].max(0.0)
                    + (-self.angular[i * nt + j]).max(0.0);
                worst = worst.max(dt * out / area);
            }
        }
        worst
    }

    /// `-div(w omega)` cell averages.
    pub(crate) fn tendency(&self, omega: &ScalarField, scheme: AdvectionScheme, out: &mut [f64]) {
        let g = self.grid;
        let (n, nt) = (g.n_r(), g.n_theta());
        let w = &omega.values;
        let at = |i: isize, j: usize| -> f64 {
            if i < 0 {
                w[g.opposite(j)]
            } else if i as usize >= n {
                w[(n - 1) * nt + j]
            } else {
                w[i as usize * nt + j]
            }
        };
        // value on a face with `a` upstream-left and `b` downstream-right,
        // `aa` beyond `a` and `bb` beyond `b`
        let face = |flux: f64, aa: f64, a: f64, b: f64, bb: f64| -> f64 {
            match scheme {
                AdvectionScheme::CentralRk2 => 0.5 * (a + b),
                AdvectionScheme::UpwindMuscl => {
                    if flux >= 0.0 {
                        a + 0.5 * minmod(b - a, a - aa)
                    } else {
                        b - 0.5 * minmod(b - a, bb - b)
                    }
                }
                AdvectionScheme::Upwind => {
                    if flux >= 0.0 {
                        a
                    } else {
                        b
                    }
                }
            }
        };
        out.iter_mut().for_each(|v| *v = 0.0);
        // radial faces between rings i - 1 and i
        for i in 1..n {
            for j in 0..nt {
                let f = self.radial[i * nt + j];
                if f == 0.0 {
                    continue;
                }
                let ii = i as isize;
                let v = face(f, at(ii - 2, j), at(ii - 1, j), at(ii, j), at(ii + 1, j));
                out[(i - 1) * nt + j] -= f * v;
                out[i * nt + j] += f * v;
            }
        }
        // angular faces between columns j - 1 and j
        for i in 0..n {
            let row = &w[i * nt..(i + 1) * nt];
            for j in 0..nt {
                let f = self.angular[i * nt + j];
                if f == 0.0 {
                    continue;
                }
                let (jm, jmm, jp) = (g.jm(j), g.jm(g.jm(j)), g.jp(j));
                let v = face(f, row[jmm], row[jm], row[j], row[jp]);
                out[i * nt + jm] -= f * v;
                out[i * nt + j] += f * v;
            }
        }
        for i in 0..n {
            let inv = 1.0 / g.area(i);
            out[i * nt..(i + 1) * nt].iter_mut().for_each(|v| *v *= inv);
        }
    }

    #[cfg(test)]
    fn max_boundary_flux(&self) -> f64 {
        let nt = self.grid.n_theta();
        let n = self.grid.n_r();
        self.radial[n * nt..].iter().fold(0.0, |m, f| m.max(f.abs()))
    }
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

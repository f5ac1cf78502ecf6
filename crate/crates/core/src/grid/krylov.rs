//! Restarted GMRES with right preconditioning.

use crate::error::{FlowError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from the contents of `x`.
///
/// `apply(v, out)` computes `out = A v`; `precond(v, out)` computes an
/// approximation of `A^-1 v`. Converges when `|b - A x| <= tol |b|`.
pub fn gmres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    restart: usize,
    tol: f64,
    max_iter: usize,
) -> Result<GmresReport> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(GmresReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let m = restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn, mut gvec) = (vec![0.0; m], vec![0.0; m], vec![0.0; m + 1]);
    let mut total = 0;
    let mut rel;

    loop {
        apply(x, &mut w);
        for k in 0..n {
            r[k] = b[k] - w[k];
        }
        let beta = norm(&r);
        rel = beta / bnorm;
        if !rel.is_finite() {
            return Err(FlowError::NonFinite("GMRES residual"));
        }
        if rel <= tol {
            return Ok(GmresReport {
                iterations: total,
                relative_residual: rel,
            });
        }
        if total >= max_iter {
            return Err(FlowError::Solver {
                iterations: total,
                residual: rel,
            });
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        gvec.iter_mut().for_each(|v| *v = 0.0);
        gvec[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            precond(&basis[k], &mut z);
            apply(&z, &mut w);
            // modified Gram-Schmidt
            for (l, q) in basis.iter().enumerate() {
                let hlk = dot(&w, q);
                hess[l][k] = hlk;
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= hlk * qi;
                }
            }
            let hn = norm(&w);
            hess[k + 1][k] = hn;
            for l in 0..k {
                let t = cs[l] * hess[l][k] + sn[l] * hess[l + 1][k];
                hess[l + 1][k] = -sn[l] * hess[l][k] + cs[l] * hess[l + 1][k];
                hess[l][k] = t;
            }
            let d = hess[k][k].hypot(hess[k + 1][k]);
            cs[k] = hess[k][k] / d;
            sn[k] = hess[k + 1][k] / d;
            hess[k][k] = d;
            hess[k + 1][k] = 0.0;
            gvec[k + 1] = -sn[k] * gvec[k];
            gvec[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            rel = gvec[k + 1].abs() / bnorm;
            if rel <= tol || total >= max_iter || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution for the update coefficients
        let mut yk = vec![0.0; k_used];
        for l in (0..k_used).rev() {
            let mut s = gvec[l];
            for c in l + 1..k_used {
                s -= hess[l][c] * yk[c];
            }
            yk[l] = s / hess[l][l];
        }
        let mut u = vec![0.0; n];
        for (l, c) in yk.iter().enumerate() {
            for (ui, qi) in u.iter_mut().zip(&basis[l]) {
                *ui += c * qi;
            }
        }
        precond(&u, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 30;
        // tridiagonal convection-diffusion matrix
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { v[i - 1] } else { 0.0 };
                let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                out[i] = 4.0 * v[i] - 1.5 * l - 0.5 * r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let rep = gmres(apply, |v, o| o.copy_from_slice(v), &b, &mut x, 8, 1e-12, 500).unwrap();
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err} after {rep:?}");
    }

    #[test]
    fn reports_failure() {
        let apply = |v: &[f64], out: &mut [f64]| {
            out[0] = v[1];
            out[1] = -v[0];
        };
        let mut x = vec![0.0; 2];
        let res = gmres(apply, |v, o| o.copy_from_slice(v), &[1.0, 0.0], &mut x, 1, 1e-14, 3);
        assert!(matches!(res, Err(FlowError::Solver { .. })));
    }
}

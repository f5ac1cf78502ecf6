//! Bessel functions of the first kind used by eigenmode presets.

/// J_n(x) by its power series; accurate to round-off for |x| <= 12.
fn bessel_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = half.powi(n as i32);
    for k in 1..=n {
        term /= k as f64;
    }
    let mut sum = term;
    let q = -half * half;
    for k in 1..200 {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_series(0, x)
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_series(1, x)
}

/// First positive zero of J0, refined by Newton from the tabulated guess.
pub fn j0_first_zero() -> f64 {
    let mut z = 2.4;
    for _ in 0..50 {
        let step = bessel_j0(z) / -bessel_j1(z);
        z -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_zero_of_j0() {
        assert!((j0_first_zero() - 2.404825557695773).abs() < 1e-14);
        assert!(bessel_j0(j0_first_zero()).abs() < 1e-15);
    }

    #[test]
    fn known_values() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert_eq!(bessel_j1(0.0), 0.0);
        assert!((bessel_j0(1.0) - 0.7651976865579666).abs() < 1e-15);
        assert!((bessel_j1(1.0) - 0.4400505857449335).abs() < 1e-15);
    }
}

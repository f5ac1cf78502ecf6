use super::*;
use crate::grid::Grid;
use crate::motion::{MotionSpec, TimeFn};
use crate::solver::{DiffusionScheme, Forcing, InitialPreset, SolverState, StepConfig};

fn state(omega: ScalarField, m: MotionSpec, nu: f64) -> SolverState {
    SolverState::new(m, omega, nu, Forcing::Potential).unwrap()
}

#[test]
fn zero_state_records_zero() {
    let g = Grid::new(16, 32).unwrap();
    let s = state(ScalarField::zeros(g), MotionSpec::identity(1.0), 0.0);
    let r = record(&s).unwrap();
    assert!(r.lr_norms.iter().all(|&v| v == 0.0));
    assert_eq!(r.energy, 0.0);
    assert!(r.is_finite());
    assert_eq!(r.csv_row().split(',').count(), CSV_HEADER.split(',').count());
}

#[test]
fn cz_ratio_is_grid_stable() {
    let cz = |n: usize| {
        let g = Grid::new(n, 2 * n).unwrap();
        let w = InitialPreset::BesselMode { amplitude: 1.0 }.sample(g).unwrap();
        record(&state(w, MotionSpec::identity(1.0), 0.0)).unwrap().cz_ratio[1]
    };
    let (a, b) = (cz(64), cz(128));
    assert!(((a - b) / b).abs() < 0.02, "{a} {b}");
}

#[test]
fn bc_residual_shrinks() {
    let m = MotionSpec::rotating_ellipse(1.5, 1.0 / 1.5, TimeFn::linear(1.0), 1.0).unwrap();
    let res = |n: usize| {
        let g = Grid::new(n, 2 * n).unwrap();
        let w = InitialPreset::OffsetBump { amplitude: 1.0, x0: 0.2, y0: 0.0, width: 0.5 }.sample(g).unwrap();
        record(&state(w, m.clone(), 0.0)).unwrap().bc_un
    };
    let (a, b) = (res(32), res(64));
    assert!(a / b > 3.0, "{a} {b}");
}

#[test]
fn monotonicity_examples() {
    let g = Grid::new(16, 32).unwrap();
    let z = record(&state(ScalarField::zeros(g), MotionSpec::identity(1.0), 0.0)).unwrap();
    assert!(monotonicity_report(&[z.clone(), z.clone(), z]).iter().all(|v| v.passed()));

    let w = InitialPreset::BesselMode { amplitude: 1.0 }.sample(g).unwrap();
    let mut s = state(w, MotionSpec::identity(1.0), 0.01);
    let mut series = vec![record(&s).unwrap()];
    for _ in 0..10 {
        s = s.step(&StepConfig::new(0.01)).unwrap();
        series.push(record(&s).unwrap());
    }
    assert!(monotonicity_report(&series).iter().all(|v| v.passed()));
    assert!(series.windows(2).all(|w| w[1].lr_norms[1] < w[0].lr_norms[1]));

    let mut bad = series.clone();
    bad[4].lr_norms[0] *= 2.0;
    let rep = monotonicity_report(&bad);
    assert_eq!(rep[0].first_violation.as_ref().unwrap().step, 4);
}

#[test]
fn weak_residual_of_zero_solution_vanishes() {
    let g = Grid::new(16, 32).unwrap();
    let mut s = state(ScalarField::zeros(g), MotionSpec::identity(1.0), 0.0);
    let mut traj = vec![s.clone()];
    for _ in 0..10 {
        s = s.step(&StepConfig::new(0.1)).unwrap();
        traj.push(s.clone());
    }
    let phi = TestFunction::polynomial([1.0, 0.5, -0.2]);
    let r = weak_residual(&traj, &phi, TimeFn::parse("1 - t").unwrap(), 1.0, 0.0).unwrap();
    assert_eq!(r.value(), 0.0);
}

#[test]
fn custom_test_must_be_tangent() {
    let bad = TestFunction::custom(|y| y[0], |_| Vec2::new(1.0, 0.0), |_| Mat2::zeros());
    assert!(bad.is_err());
    let ok = TestFunction::custom(
        |y| (1.0 - y.norm_squared()).powi(2),
        |y| -4.0 * (1.0 - y.norm_squared()) * y,
        |y| -4.0 * (1.0 - y.norm_squared()) * Mat2::identity() + 8.0 * y * y.transpose(),
    );
    assert!(ok.is_ok());
}

#[test]
fn viscous_bessel_residual_converges_and_routes_agree() {
    // Crank-Nicolson keeps every error term second order; with backward
    // Euler the O(dt) splitting term partly cancels the spatial one and the
    // sequence is not monotone on coarse levels.
    let nu = 0.05;
    let run = |n: usize, dt: f64| {
        let g = Grid::new(n, 2 * n).unwrap();
        let w = InitialPreset::BesselMode { amplitude: 1.0 }.sample(g).unwrap();
        let m = MotionSpec::stretch(TimeFn::parse("0.2*sin(t)").unwrap(), 0.5).unwrap();
        let mut s = state(w, m, nu);
        let phi = TestFunction::polynomial([1.0, 0.3, 0.1]);
        let mut acc = WeakAccumulator::new(&phi, TimeFn::parse("cos(pi*t)").unwrap(), 0.5, nu, &s).unwrap();
        acc.push(&s).unwrap();
        let mut cfg = StepConfig::new(dt);
        cfg.diffusion = DiffusionScheme::CrankNicolson;
        for _ in 0..(0.5 / dt).round() as usize {
            s = s.step(&cfg).unwrap();
            acc.push(&s).unwrap();
        }
        acc.finish().unwrap()
    };
    let a = run(16, 0.02);
    let b = run(32, 0.01);
    assert!(b.vorticity_form.abs() < 0.5 * a.vorticity_form.abs(), "{a:?} {b:?}");
    assert!(b.velocity_form.abs() < 0.5 * a.velocity_form.abs(), "{a:?} {b:?}");
    assert!(b.route_gap() < 0.5 * a.route_gap(), "{a:?} {b:?}");
}

use super::*;
use crate::grid::integrate;
use crate::motion::TimeFn;
use crate::special::{bessel_j0, bessel_j1, j0_first_zero};

fn grid(n: usize) -> Grid {
    Grid::new(n, 2 * n).unwrap()
}

#[test]
fn biot_savart_examples() {
    let g = grid(64);
    let m = MotionSpec::identity(1.0);
    let (psi, v) = biot_savart(&ScalarField::zeros(g), &m, 0.0).unwrap();
    assert_eq!(psi.max_abs(), 0.0);
    assert_eq!(v.magnitude().max_abs(), 0.0);

    let (_, v) = biot_savart(&ScalarField::constant(g, 2.0), &m, 0.0).unwrap();
    let exact = VectorField::from_cartesian(g, |x, y| Vec2::new(-y, x));
    assert!(v.max_abs_diff(&exact) < 1e-10);

    let k = j0_first_zero();
    let err = |n: usize| {
        let g = grid(n);
        let w = ScalarField::from_polar(g, |r, _| bessel_j0(k * r));
        let (_, v) = biot_savart(&w, &m, 0.0).unwrap();
        let exact = VectorField::from_cartesian(g, |x, y| {
            let r = x.hypot(y);
            Vec2::new(-y, x) * (bessel_j1(k * r) / k / r)
        });
        v.max_abs_diff(&exact)
    };
    let (e1, e2) = (err(32), err(64));
    assert!(e2 < 1e-3 && e1 / e2 > 3.0, "{e1} {e2}");
}

#[test]
fn translation_carries_fluid_rigidly() {
    let g = grid(16);
    let m = MotionSpec::translation(TimeFn::linear(1.0), TimeFn::constant(0.0), 1.0).unwrap();
    let s = SolverState::new(m, ScalarField::zeros(g), 0.0, Forcing::Potential).unwrap();
    let w = advection_field(&s);
    assert!(w.magnitude().max_abs() < 1e-12);
    let id = SolverState::new(MotionSpec::identity(1.0), ScalarField::constant(g, 1.0), 0.0, Forcing::Potential).unwrap();
    let w = advection_field(&id);
    assert_eq!(w, id.u_phys);
}

#[test]
fn forcing_examples() {
    let g = grid(8);
    let m = MotionSpec::identity(1.0);
    assert_eq!(vorticity_forcing(&Forcing::Potential, &m, 0.3, g).unwrap().max_abs(), 0.0);
    let one = Forcing::from_expr(Expr::parse("1").unwrap());
    let f = vorticity_forcing(&one, &m, 0.3, g).unwrap();
    assert!(f.values.iter().all(|&v| v == 1.0));
    let sin = Forcing::Curl(Arc::new(|x: Vec2, _| x[1].atan2(x[0]).sin()));
    let f = vorticity_forcing(&sin, &m, 0.3, g).unwrap();
    let exact = ScalarField::from_polar(g, |_, t| t.sin());
    assert!(f.max_abs_diff(&exact) < 1e-12);
}

#[test]
fn mollify_examples() {
    let g = grid(64);
    let w0 = InitialPreset::BesselMode { amplitude: 1.0 }.sample(g).unwrap();
    assert_eq!(mollify_initial(&w0, 0.0).unwrap(), w0);
    let k = j0_first_zero();
    let w = mollify_initial(&w0, 0.1).unwrap();
    let expect = (-0.1 * k * k).exp();
    let ratio = integrate(&w, 2.0).unwrap() / integrate(&w0, 2.0).unwrap();
    assert!((ratio / expect - 1.0).abs() < 0.01, "{ratio} vs {expect}");

    let ind = InitialPreset::DiskIndicator { amplitude: 1.0, radius: 0.5 }.sample(g).unwrap();
    let n0 = integrate(&ind, 1.5).unwrap();
    let mut prev = f64::INFINITY;
    for nu in [0.1, 0.01, 0.001] {
        let w = mollify_initial(&ind, nu).unwrap();
        assert!(integrate(&w, 1.5).unwrap() <= n0 * (1.0 + 1e-12));
        let mut d = w.clone();
        d.axpy(-1.0, &ind);
        let dist = integrate(&d, 1.5).unwrap();
        assert!(dist < prev);
        prev = dist;
    }
}

#[test]
fn cfl_violation_reports_suggestion() {
    let g = grid(16);
    let w0 = InitialPreset::OffsetBump { amplitude: 5.0, x0: 0.3, y0: 0.0, width: 0.4 }.sample(g).unwrap();
    let s = SolverState::new(MotionSpec::identity(1.0), w0, 0.0, Forcing::Potential).unwrap();
    match s.step(&StepConfig::new(0.5)) {
        Err(FlowError::Cfl { suggested_dt, .. }) => {
            assert!(s.courant(suggested_dt) <= 0.4);
        }
        other => panic!("expected CFL error, got {other:?}"),
    }
}

#[test]
fn radial_state_is_steady_under_transport() {
    let g = grid(32);
    let w0 = InitialPreset::RadialPoly { amplitude: 1.0 }.sample(g).unwrap();
    let mut s = SolverState::new(MotionSpec::identity(1.0), w0.clone(), 0.0, Forcing::Potential).unwrap();
    for _ in 0..20 {
        s = s.step(&StepConfig::new(0.01)).unwrap();
    }
    assert!(s.omega.max_abs_diff(&w0) < 1e-12);
}

#[test]
fn translation_matches_fixed_disk_in_reference_frame() {
    let g = grid(24);
    let w0 = InitialPreset::OffsetBump { amplitude: 1.0, x0: 0.3, y0: -0.1, width: 0.4 }.sample(g).unwrap();
    let tr = MotionSpec::translation(TimeFn::parse("0.2*sin(3*t)").unwrap(), TimeFn::linear(0.5), 1.0).unwrap();
    let mut a = SolverState::new(tr, w0.clone(), 0.0, Forcing::Potential).unwrap();
    let mut b = SolverState::new(MotionSpec::identity(1.0), w0, 0.0, Forcing::Potential).unwrap();
    let cfg = StepConfig::new(0.005);
    for _ in 0..20 {
        a = a.step(&cfg).unwrap();
        b = b.step(&cfg).unwrap();
    }
    assert!(a.omega.max_abs_diff(&b.omega) < 1e-12);
}

#[test]
fn tangency_on_moving_domains() {
    let g = grid(32);
    let w0 = InitialPreset::OffsetBump { amplitude: 1.0, x0: 0.2, y0: 0.1, width: 0.5 }.sample(g).unwrap();
    let h = g.h();
    for m in [
        MotionSpec::stretch(TimeFn::parse("0.3*sin(t)").unwrap(), 1.0).unwrap(),
        MotionSpec::rotating_ellipse(1.5, 1.0 / 1.5, TimeFn::linear(1.0), 1.0).unwrap(),
    ] {
        let s = SolverState::new(m, w0.clone(), 0.0, Forcing::Potential).unwrap();
        let tan = boundary_tangency(&s);
        assert!(tan < 5.0 * h * h, "{tan}");
    }
}

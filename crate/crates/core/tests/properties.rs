use std::f64::consts::PI;

use proptest::prelude::*;

use mdflow::cli::parse_config;
use mdflow::diagnostics::{monotonicity_report, record};
use mdflow::expr::{Expr, Var};
use mdflow::grid::{elliptic_apply_with, integrate, read_snapshot, solve_dirichlet, write_snapshot, BoundaryRule, Grid, ScalarField};
use mdflow::harness::fit_linear;
use mdflow::homogenize::analytic_boundary_residual;
use mdflow::motion::{Mat2, MotionSpec, TimeFn, Vec2};
use mdflow::solver::{mollify_initial, Forcing, InitialPreset, SolverState, StepConfig};

fn stretch(amp: f64, freq: f64) -> MotionSpec {
    MotionSpec::stretch(TimeFn::parse(&format!("{amp}*sin({freq}*t)")).unwrap(), 2.0).unwrap()
}

fn ellipse(ax: f64, rate: f64) -> MotionSpec {
    MotionSpec::rotating_ellipse(ax, 1.0 / ax, TimeFn::linear(rate), 2.0).unwrap()
}

fn translation(a: f64, b: f64) -> MotionSpec {
    let cx = TimeFn::parse(&format!("{a}*sin(2*t)")).unwrap();
    let cy = TimeFn::parse(&format!("{b}*t^2")).unwrap();
    MotionSpec::translation(cx, cy, 2.0).unwrap()
}

fn any_motion() -> impl Strategy<Value = MotionSpec> {
    prop_oneof![
        Just(MotionSpec::identity(2.0)),
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| translation(a, b)),
        (-0.6..0.6f64, 0.2..3.0f64).prop_map(|(a, f)| stretch(a, f)),
        (1.0..2.5f64, -2.0..2.0f64).prop_map(|(a, r)| ellipse(a, r)),
    ]
}

fn disk_point() -> impl Strategy<Value = Vec2> {
    (0.0..0.999f64, 0.0..2.0 * PI).prop_map(|(r, a)| Vec2::new(r * a.cos(), r * a.sin()))
}

fn bump() -> impl Strategy<Value = InitialPreset> {
    (0.2..2.0f64, -0.4..0.4f64, -0.4..0.4f64, 0.3..0.6f64)
        .prop_map(|(amplitude, x0, y0, width)| InitialPreset::OffsetBump { amplitude, x0, y0, width })
}

fn metric(a: f64, angle: f64) -> Mat2 {
    let r = mdflow::motion::rotation(angle);
    r * Mat2::new(a * a, 0.0, 0.0, 1.0 / (a * a)) * r.transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn map_is_area_preserving_and_invertible(m in any_motion(), y in disk_point(), t in 0.0..2.0f64) {
        let x = m.map_backward(y, t).unwrap();
        let back = m.map_forward(x, t).unwrap();
        prop_assert!((back - y).norm() < 1e-12);
        let det = m.jacobian(x, t).unwrap().determinant();
        prop_assert!((det - 1.0).abs() <= 4.0 * f64::EPSILON, "det {det}");
    }

    #[test]
    fn boundary_flux_integrates_to_zero(m in any_motion(), t in 0.0..2.0f64) {
        prop_assert!(m.flux_integral(t, 512).unwrap().abs() < 1e-10);
    }

    #[test]
    fn disk_boundary_maps_to_domain_boundary(m in any_motion(), a in 0.0..2.0 * PI, t in 0.0..2.0f64) {
        let x = m.map_backward(Vec2::new(a.cos(), a.sin()), t).unwrap();
        prop_assert!(m.signed_distance(x, t).unwrap().abs() < 1e-9);
    }

    #[test]
    fn analytic_rho_meets_boundary_condition(m in any_motion(), t in 0.0..2.0f64) {
        prop_assert!(analytic_boundary_residual(&m, t, 256).unwrap() < 1e-10);
    }

    #[test]
    fn snapshot_roundtrip_is_bit_exact(vals in proptest::collection::vec(-1e6..1e6f64, 8 * 16), t in 0.0..10.0f64) {
        let g = Grid::new(8, 16).unwrap();
        let f = ScalarField::from_values(g, vals).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f, t).unwrap();
        let (back, t2) = read_snapshot(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(t2.to_bits(), t.to_bits());
        prop_assert_eq!(back.grid(), g);
        prop_assert_eq!(back.max_abs_diff(&f), 0.0);
    }

    #[test]
    fn lr_norm_is_homogeneous(p in prop_oneof![Just(1.5), Just(2.0), Just(4.0), Just(f64::INFINITY)], c in -5.0..5.0f64, pre in bump()) {
        let g = Grid::new(16, 32).unwrap();
        let f = pre.sample(g).unwrap();
        let base = integrate(&f, p).unwrap();
        let scaled = integrate(&f.map(|v| c * v), p).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn mollifier_does_not_grow_lr_norms(pre in bump(), nu in 1e-4..1e-2f64) {
        let g = Grid::new(16, 32).unwrap();
        let w = pre.sample(g).unwrap();
        let s = mollify_initial(&w, nu).unwrap();
        for p in [1.5, 2.0, 4.0, f64::INFINITY] {
            prop_assert!(integrate(&s, p).unwrap() <= integrate(&w, p).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn dirichlet_solve_reproduces_linear_functions(c in proptest::array::uniform3(-2.0..2.0f64), a in 1.0..2.0f64, ang in 0.0..PI) {
        let g = Grid::new(16, 32).unwrap();
        let q = metric(a, ang);
        let exact = ScalarField::from_cartesian(g, |x, y| c[0] + c[1] * x + c[2] * y);
        let bnd: Vec<f64> = g.boundary_angles().iter().map(|t| c[0] + c[1] * t.cos() + c[2] * t.sin()).collect();
        let u = solve_dirichlet(&q, &ScalarField::zeros(g), &bnd).unwrap();
        prop_assert!(u.max_abs_diff(&exact) < 1e-8, "{}", u.max_abs_diff(&exact));
    }

    // The anisotropic part is assembled in non-divergence form, so only the
    // isotropic operator telescopes.
    #[test]
    fn isotropic_neumann_operator_is_conservative(x in proptest::collection::vec(-1.0..1.0f64, 8 * 16)) {
        let g = Grid::new(8, 16).unwrap();
        let q = Mat2::identity();
        let f = ScalarField::from_values(g, x).unwrap();
        let zero = vec![0.0; g.n_theta()];
        let af = elliptic_apply_with(&q, &f, BoundaryRule::Neumann(&zero)).unwrap();
        prop_assert!(af.integral().abs() < 1e-10 * (1.0 + af.max_abs()), "{}", af.integral());
    }

    #[test]
    fn fit_recovers_exact_lines(a in 0.1..10.0f64, b in 1e-4..1e-1f64, nus in proptest::collection::vec(1e-5..1e-1f64, 2..6)) {
        let pts: Vec<(f64, f64)> = nus.iter().map(|&n| (n, a * n + b)).collect();
        let fit = fit_linear(&pts).unwrap();
        prop_assert!((fit.a - a).abs() < 1e-6 * a.max(1.0) || nus.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
        prop_assert!(fit.max_rel_error < 1e-8);
    }

    #[test]
    fn expression_derivative_matches_difference_quotient(c in proptest::array::uniform4(-2.0..2.0f64), t in 0.1..2.0f64) {
        let src = format!("{}*sin({}*t) + {}*t^2 + {}*exp(-t)", c[0], c[1], c[2], c[3]);
        let e = Expr::parse(&src).unwrap();
        let d = e.derivative(Var::T);
        let h = 1e-6;
        let fd = (e.eval_t(t + h) - e.eval_t(t - h)) / (2.0 * h);
        prop_assert!((d.eval_t(t) - fd).abs() < 1e-6 * (1.0 + fd.abs()));
        let again = Expr::parse(&e.to_string()).unwrap();
        prop_assert!((again.eval(t, 0.3, -0.2) - e.eval(t, 0.3, -0.2)).abs() < 1e-12 * (1.0 + e.eval_t(t).abs()));
    }

    #[test]
    fn config_grid_bounds(n in 1usize..5000) {
        let text = format!("motion.kind = identity\ngrid.n_r = {n}\nphysics.nu = 0.01\ninitial.preset = bessel_mode\n");
        let res = parse_config(&text);
        // n_theta defaults to 2 n_r, so it leaves the range first.
        if (8..=2048).contains(&n) {
            let cfg = res.unwrap();
            prop_assert_eq!(cfg.n_r, n);
            prop_assert_eq!(cfg.n_theta, 2 * n);
        } else {
            let errs = res.unwrap_err();
            prop_assert!(errs.iter().any(|e| e.msg.contains("outside [8, 4096]")), "{errs:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lr_norms_do_not_increase(m in any_motion(), pre in bump(), nu in prop_oneof![Just(0.0), 1e-4..1e-2f64]) {
        let g = Grid::new(16, 32).unwrap();
        let w = pre.sample(g).unwrap();
        let mut s = SolverState::new(m, w, nu, Forcing::Potential).unwrap();
        let cfg = StepConfig::new(5e-3);
        let mut series = vec![record(&s).unwrap()];
        for _ in 0..20 {
            s = s.step(&cfg).unwrap();
            series.push(record(&s).unwrap());
        }
        for v in monotonicity_report(&series) {
            prop_assert!(v.passed(), "r = {}: {:?}", v.r, v.first_violation);
        }
    }

    #[test]
    fn inviscid_circulation_is_conserved(m in any_motion(), pre in bump()) {
        let g = Grid::new(16, 32).unwrap();
        let w = pre.sample(g).unwrap();
        let c0 = w.integral();
        let mut s = SolverState::new(m, w, 0.0, Forcing::Potential).unwrap();
        let cfg = StepConfig::new(5e-3);
        for _ in 0..20 {
            s = s.step(&cfg).unwrap();
        }
        prop_assert!((s.omega.integral() - c0).abs() < 1e-12 * (1.0 + c0.abs()));
    }
}

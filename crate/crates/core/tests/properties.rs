use std::f64::consts::PI;

use proptest::prelude::*;
use relaxopt_core::adjoint::sweep_from;
use relaxopt_core::spatial::{minmod_choice, Slope};
use relaxopt_core::*;

const SCHEMES: [SpatialScheme; 2] = [SpatialScheme::Upwind1, SpatialScheme::Muscl2(Limiter::Minmod)];
const STABLE: [&str; 4] = ["imex-euler", "ars-222", "ssp2-222", "ars-443"];

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mass_is_conserved(u0 in field(24), shift in -1.0..1.0f64, tab in 0..4usize, sch in 0..2usize) {
        let grid = make_grid(0.0, 2.0 * PI, 24).unwrap();
        let mut p = ForwardProblem::burgers(grid, 0.8);
        p.scheme = SCHEMES[sch];
        let u0: Vec<f64> = u0.iter().map(|x| x + shift).collect();
        let traj = solve_forward(&p, &builtin_tableau(STABLE[tab]).unwrap(), &u0, Storage::TerminalOnly).unwrap();
        let m0: f64 = u0.iter().sum();
        let m1: f64 = traj.terminal().u.iter().sum();
        let scale = u0.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!((m1 - m0).abs() <= 1e-11 * scale);
    }

    #[test]
    fn constants_are_fixed_points(c in -2.0..2.0f64, tab in 0..4usize, sch in 0..2usize) {
        let grid = make_grid(-1.0, 1.0, 16).unwrap();
        let mut p = ForwardProblem::burgers(grid, 0.5);
        p.scheme = SCHEMES[sch];
        let traj = solve_forward(&p, &builtin_tableau(STABLE[tab]).unwrap(), &[c; 16], Storage::TerminalOnly).unwrap();
        let y = traj.terminal();
        prop_assert!(y.u.iter().all(|u| (u - c).abs() <= 1e-13));
        prop_assert!(y.v.iter().all(|v| (v - 0.5 * c * c).abs() <= 1e-13));
    }

    #[test]
    fn transport_transpose_dot_test(
        n in 3..40usize,
        a in 0.1..3.0f64,
        seed in any::<u64>(),
        sch in 0..2usize,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = || (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let op = SpatialOp::new(make_grid(0.0, 1.0, n).unwrap(), a, SCHEMES[sch]).unwrap();
        let at = RelaxState { u: f(), v: f() };
        let x = RelaxState { u: f(), v: f() };
        let y = RelaxState { u: f(), v: f() };
        let lin = op.linearize(&at.u, &at.v);
        let mut ax = RelaxState::zeros(n);
        op.apply_linear(&lin, &x.u, &x.v, &mut ax.u, &mut ax.v);
        let aty = op.apply_dx_transpose_at(&at, &y).unwrap();
        let dot = |p: &RelaxState, q: &RelaxState| -> f64 {
            p.u.iter().zip(&q.u).chain(p.v.iter().zip(&q.v)).map(|(a, b)| a * b).sum()
        };
        let l = dot(&y, &ax);
        let r = dot(&aty, &x);
        prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()).max(1.0));
    }

    #[test]
    fn adjoint_sweep_is_linear(pa in field(12), pb in field(12), qa in field(12), s in -3.0..3.0f64, form in 0..3usize) {
        let grid = make_grid(0.0, 2.0 * PI, 12).unwrap();
        let p = ForwardProblem::burgers(grid.clone(), 0.3);
        let u0 = grid.sample(|x| 0.5 + x.sin());
        let traj = solve_forward(&p, &builtin_tableau("ssp2-222").unwrap(), &u0, Storage::Full).unwrap();
        let form = [AdjointForm::Ark, AdjointForm::Xi, AdjointForm::Zeta][form];
        let a = CostateState { p: pa.clone(), q: qa.clone() };
        let b = CostateState { p: pb.clone(), q: vec![0.0; 12] };
        let c = CostateState {
            p: pa.iter().zip(&pb).map(|(x, y)| x + s * y).collect(),
            q: qa.clone(),
        };
        let ra = sweep_from(&traj, a, form, false).unwrap();
        let rb = sweep_from(&traj, b, form, false).unwrap();
        let rc = sweep_from(&traj, c, form, false).unwrap();
        let (ia, ib, ic) = (ra.initial(), rb.initial(), rc.initial());
        let scale = ia.max_abs().max(ib.max_abs() * s.abs()).max(1.0);
        for i in 0..12 {
            prop_assert!((ic.p[i] - ia.p[i] - s * ib.p[i]).abs() <= 1e-12 * scale);
            prop_assert!((ic.q[i] - ia.q[i] - s * ib.q[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn cost_is_a_nonnegative_quadratic(u in field(10), d in field(10), dx in 0.01..1.0f64) {
        let j = cost(&u, &d, dx).unwrap();
        prop_assert!(j >= 0.0);
        prop_assert_eq!(j, cost(&d, &u, dx).unwrap());
        let doubled: Vec<f64> = u.iter().zip(&d).map(|(u, d)| d + 2.0 * (u - d)).collect();
        let j2 = cost(&doubled, &d, dx).unwrap();
        prop_assert!((j2 - 4.0 * j).abs() <= 1e-12 * j2.max(1e-300));
    }

    #[test]
    fn minmod_picks_the_smaller_same_signed_slope(b in -5.0..5.0f64, f in -5.0..5.0f64) {
        match minmod_choice(b, f) {
            Slope::Zero => prop_assert!(b * f <= 0.0),
            Slope::Backward => prop_assert!(b * f > 0.0 && b.abs() <= f.abs()),
            Slope::Forward => prop_assert!(b * f > 0.0 && f.abs() < b.abs()),
        }
    }

    #[test]
    fn subchar_speed_dominates_the_flux_derivative(u in field(20), scale in 0.1..10.0f64) {
        let u: Vec<f64> = u.iter().map(|x| x * scale).collect();
        let cfg = RelaxConfig::default();
        let a = subchar_speed(&FluxModel::Burgers, &u, &cfg).unwrap();
        prop_assert!(a >= cfg.a_floor);
        prop_assert!(u.iter().all(|x| x.abs() < a));
    }
}

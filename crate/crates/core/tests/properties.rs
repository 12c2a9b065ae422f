use fbplab_core::barriers::{Side, Stepper};
use fbplab_core::checks::{order_gap, random_dominating, random_profile, summarize, OrderChecker};
use fbplab_core::fbp::{heat_solve_moving, EdgePath};
use fbplab_core::green::KernelVariant;
use fbplab_core::profile::{transport_map, CutSide};
use fbplab_core::rng::stream;
use fbplab_core::{DensityProfile, FluxParams, Grid};
use proptest::prelude::*;

const SLACK: f64 = 1e-8;

fn grid() -> Grid {
    Grid::new(0.02, 300).unwrap()
}

fn p1() -> FluxParams {
    FluxParams::new(1.0).unwrap()
}

fn pair(seed: u64) -> (DensityProfile, DensityProfile) {
    let mut rng = stream(seed, &[]);
    let u = random_profile(&mut rng, grid(), 2.0, 0.3, 2.0);
    let v = random_profile(&mut rng, grid(), 2.0, 0.3, 2.0);
    (u, v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn order_lemmas_hold(seed in any::<u64>(), di in 0usize..3) {
        let delta = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0][di];
        let c = OrderChecker::new(grid(), delta, 3, p1(), CutSide::Right);
        let mut rng = stream(seed, &[1]);
        let u = random_profile(&mut rng, grid(), 2.0, 0.3, 2.0);
        let v = random_dominating(&mut rng, &u, 10, 0.3);
        let (a, b) = pair(seed);
        let m = order_gap(&a, &b);
        let mut all = c.ordered(&u, &v);
        all.extend(c.modulo(&a, &b, m));
        all.extend(c.contraction(&a, &b));
        all.push(OrderChecker::composition(&a, &b, &u));
        for s in summarize(&all, SLACK) {
            prop_assert_eq!(s.failures, 0, "{:?}", s);
        }
    }

    #[test]
    fn transport_map_changes_variables(seed in any::<u64>(), cut in 0.1f64..2.5) {
        let mut rng = stream(seed, &[2]);
        let u = random_profile(&mut rng, grid(), 2.0, 0.3, 2.0);
        let v = random_dominating(&mut rng, &u, 25, 0.0);
        let f = transport_map(&u, &v).unwrap();
        let g = u.grid();
        for (k, fr) in f.at_nodes().into_iter().enumerate() {
            prop_assert!(fr >= g.node(k) - 1e-12);
        }
        // ∫ v 1_{r ≥ R} against ∫ u 1_{f(r) ≥ R} by sub-cell quadrature
        let sub = 16;
        let mut rhs = 0.0;
        for (i, &x) in u.values().iter().enumerate() {
            for s in 0..sub {
                let r = g.node(i) + (s as f64 + 0.5) * g.h() / sub as f64;
                if f.eval(r) >= cut {
                    rhs += x * g.h() / sub as f64;
                }
            }
        }
        let tol = u.max_value() * g.h() / sub as f64 * 2.0 + 1e-12;
        prop_assert!((v.tail_mass(cut) - rhs).abs() <= tol, "{} vs {}", v.tail_mass(cut), rhs);
    }

    #[test]
    fn moving_edge_heat_keeps_the_maximum_principle(seed in any::<u64>(), vel in -0.4f64..1.5) {
        let g = Grid::new(0.01, 500).unwrap();
        let mut rng = stream(seed, &[3]);
        let u = random_profile(&mut rng, g, 1.5, 0.5, 1.5);
        let x0 = u.support_end();
        let edge = EdgePath::linear(x0, vel, 0.5).unwrap();
        let no_flux = FluxParams { j: 0.0 };
        let run = heat_solve_moving(&u, &edge, no_flux, 1e-3, &[0.1, 0.25, 0.5]).unwrap();
        prop_assert!(run.clip_mass <= SLACK, "clipped {}", run.clip_mass);
        for (_, s) in &run.snapshots {
            prop_assert!(s.max_value() <= u.max_value() + SLACK);
        }
    }
}

/// One constant fitted across the δ sweep: `‖S^{δ,±}_t u‖∞ ≤ c (j + ‖u‖∞)` for `t ≤ 1`.
#[test]
fn barriers_are_equibounded() {
    let c = 2.0;
    for seed in 0..6 {
        let (u, _) = pair(seed);
        let bound = c * (1.0 + u.max_value());
        for delta in [1.0 / 4.0, 1.0 / 16.0, 1.0 / 64.0] {
            let s = Stepper::new(grid(), delta, KernelVariant::HalfLine, p1()).unwrap();
            let k = (1.0 / delta) as usize;
            for side in [Side::Upper, Side::Lower] {
                let mut cur = u.clone();
                for _ in 0..k {
                    cur = s.step(&cur, side).unwrap();
                    assert!(cur.max_value() <= bound, "{} > {bound}", cur.max_value());
                }
            }
        }
    }
}

/// `|S^{δ,+}_{nδ} u - S^{δ',+}_{nδ'} u|₁ ≤ c ‖u‖₁ n (δ' - δ) / δ^{3/2}` with a generous `c`.
#[test]
fn nearby_steps_give_nearby_barriers() {
    let c = 10.0;
    for seed in 0..4 {
        let (u, _) = pair(seed);
        for (d, d2) in [(0.05, 0.055), (0.02, 0.021), (0.1, 0.12)] {
            let a = Stepper::new(grid(), d, KernelVariant::HalfLine, p1()).unwrap();
            let b = Stepper::new(grid(), d2, KernelVariant::HalfLine, p1()).unwrap();
            for n in 1..=4 {
                let x = a.evolve(&u, n, Side::Upper).unwrap();
                let y = b.evolve(&u, n, Side::Upper).unwrap();
                let bound = c * u.total_mass() * n as f64 * (d2 - d) / d.powf(1.5);
                assert!(x.l1_distance(&y) <= bound, "{} > {bound}", x.l1_distance(&y));
            }
        }
    }
}

use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uno_core::onebit::coordinate_bounds;
use uno_core::rka::{project_row, ConstraintKind};
use uno_core::{quantize_seeded, solve, DitherPlan, Init, ModuloSampleVector, SolverConfig};

fn capture(seed: u64, n: usize, m: usize) -> (Vec<f64>, uno_core::OneBitCapture) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..n)
        .map(|_| 2.0 * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) - 1.0)
        .collect();
    let v = ModuloSampleVector::new(y.clone(), 1.0, 0.01).unwrap();
    let cap = quantize_seeded(&v, &DitherPlan::new(n, m, 1.0, seed.wrapping_add(1))).unwrap();
    (y, cap)
}

fn config(seed: u64, init: Init) -> SolverConfig {
    SolverConfig {
        max_iterations: 2_000_000,
        feasibility_tol: 0.0,
        trace_stride: 97,
        rng_seed: seed,
        init,
        record_histogram: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_start_reaches_the_polyhedron_inside_the_range(seed in any::<u64>(), n in 1usize..30, m in 1usize..30) {
        let (y, cap) = capture(seed, n, m);
        let sol = solve(&cap, &config(seed, Init::Zero), Some(&y)).unwrap();
        prop_assert!(sol.converged);
        prop_assert_eq!(sol.final_violation, 0.0);
        prop_assert!(sol.y_hat.iter().all(|v| (-1.0..=1.0).contains(v)));
        let gamma = cap.thresholds().unwrap();
        for (b, v) in coordinate_bounds(cap.bits(), &gamma).iter().zip(&sol.y_hat) {
            prop_assert!(b.lower <= *v && *v <= b.upper);
        }
    }

    #[test]
    fn identical_inputs_identical_outputs(seed in any::<u64>()) {
        let (y, cap) = capture(seed, 12, 9);
        let a = solve(&cap, &config(seed, Init::Zero), Some(&y)).unwrap();
        let b = solve(&cap, &config(seed, Init::Zero), Some(&y)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn projection_satisfies_its_row(y0 in -5.0f64..5.0, r in prop::bool::ANY, tau in -1.0f64..1.0) {
        let sign = if r { 1.0 } else { -1.0 };
        let mut y = [y0, 3.0];
        project_row(&mut y, &[(0, sign)], sign * tau, ConstraintKind::Inequality);
        prop_assert!(sign * y[0] >= sign * tau - 1e-15);
        prop_assert_eq!(y[1], 3.0);
        if sign * y0 < sign * tau {
            prop_assert!((y[0] - tau).abs() <= 1e-15);
        } else {
            prop_assert_eq!(y[0], y0);
        }
    }
}

#[test]
fn midpoint_start_is_already_feasible() {
    let (_, cap) = capture(5, 50, 20);
    let sol = solve(&cap, &config(1, Init::Midpoint), None).unwrap();
    assert!(sol.converged);
    assert_eq!(sol.trace.iterations_run, 0);
}

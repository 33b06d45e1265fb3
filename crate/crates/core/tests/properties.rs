use mckv_core::closed_form::{g0, g_const_drift, nu0, omega0};
use mckv_core::heat_potential::{solve_nu, DriftSpec};
use mckv_core::mckv::{omega_update, solve, ProblemSpec};
use mckv_core::{GridSpec, SolverOptions};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loss_path_is_a_subprobability(frac in 0.0f64..1.0, z in 0.3f64..1.5, n in 50usize..150) {
        // alpha > 2z forces a jump; stay clear of it
        let alpha = frac * (1.5 * z).min(0.8);
        let spec = ProblemSpec::new(alpha, z, GridSpec::new(1.0, n).unwrap()).unwrap();
        let p = solve(&spec, &SolverOptions::default()).unwrap();
        prop_assert!(p.blow_up.is_none());
        prop_assert_eq!(p.loss[0], 0.0);
        prop_assert!(p.loss.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(p.loss.iter().all(|&l| l < 1.0));
        prop_assert!(p.g.iter().all(|&g| g >= -1e-10));
    }

    #[test]
    fn repeated_updates_telescope(gs in prop::collection::vec(0.0f64..5.0, 2..60), d in 1e-4f64..0.1) {
        let mut omega = 0.0;
        for w in gs.windows(2) {
            omega = omega_update(omega, w[1], w[0], d);
        }
        let trap: f64 = gs.windows(2).map(|w| 0.5 * d * (w[0] + w[1])).sum();
        prop_assert!((omega - trap).abs() <= 1e-12 * (1.0 + trap));
    }

    #[test]
    fn zero_drift_weight_is_closed_form(z in 0.1f64..3.0, n in 10usize..200) {
        let gr = GridSpec::new(2.0, n).unwrap();
        let nu = solve_nu(&DriftSpec::Zero, &gr, z).unwrap();
        for (k, v) in nu.iter().enumerate() {
            prop_assert!((v - nu0(gr.node(k), z).unwrap()).abs() <= 1e-15);
        }
    }

    #[test]
    fn omega0_is_additive(z in 0.1f64..2.0, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let mut v = [a, b, c];
        v.sort_by(f64::total_cmp);
        let [s, u, t] = v;
        let lhs = omega0(t, s, z).unwrap();
        let rhs = omega0(t, u, z).unwrap() + omega0(u, s, z).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-14);
        prop_assert!((0.0..=1.0).contains(&lhs));
    }

    #[test]
    fn zero_drift_rate_is_the_constant_drift_limit(t in 0.01f64..5.0, z in 0.1f64..3.0) {
        let (a, b) = (g_const_drift(t, z, 0.0).unwrap(), g0(t, z).unwrap());
        prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-300));
        // drift towards the boundary raises the early rate
        prop_assert!(g_const_drift(t, z, -0.3).unwrap() > g_const_drift(t, z, 0.3).unwrap());
    }
}

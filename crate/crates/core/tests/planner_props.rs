use deco_core::planner::{brute_force_plan, phi, phi_prime};
use deco_core::timing::delta_star;
use deco_core::{deco_plan, t_avg_closed_form, CompressionRatio, ConvergenceRegime, TimingParams};
use proptest::prelude::*;

proptest! {
    #[test]
    fn phi_grows_with_staleness(delta in 0.01..0.99f64, tau in 0usize..200) {
        prop_assert!(phi(&delta, tau + 1).unwrap() > phi(&delta, tau).unwrap());
    }

    // Monotone in delta only below the staleness where an interior minimum appears.
    #[test]
    fn phi_falls_with_ratio_for_small_tau(delta in 0.01..0.98f64, step in 0.001..0.02f64, tau in 0usize..=5) {
        prop_assert!(phi(&(delta + step), tau).unwrap() < phi(&delta, tau).unwrap());
    }

    #[test]
    fn degradation_identities(delta in 0.01..1.0f64, tau in 0usize..50) {
        prop_assert_eq!(phi(&1.0, tau).unwrap(), 0.0);
        let undelayed = phi(&delta, 0).unwrap();
        prop_assert!((undelayed - (1.0 - delta) / delta).abs() <= 1e-12 * undelayed.max(1.0));
        prop_assert!((phi_prime(&delta, tau).unwrap() - phi(&delta, tau).unwrap() / delta).abs()
            <= 1e-12 * phi_prime(&delta, tau).unwrap().max(1.0));
    }

    #[test]
    fn plan_is_bubble_free_and_beats_delta_star(
        t in 0.05..1.0f64, b in 0.0..3.0f64, transmit in 0.01..5.0f64,
    ) {
        let p = TimingParams::new(t, transmit, 1.0, b).unwrap();
        let floor = CompressionRatio::new(1e-6).unwrap();
        for regime in [ConvergenceRegime::Standard, ConvergenceRegime::HighHeterogeneity] {
            let plan = deco_plan(&p, regime, &floor).unwrap();
            if !plan.clamped {
                prop_assert!((t_avg_closed_form(&p, &plan.delta, plan.tau) - t).abs() <= 1e-12 * t);
            }
            let (lo, hi) = deco_core::planner::tau_search_range(&p).unwrap();
            let grid: Vec<f64> = (lo..=hi).map(|tau| delta_star(tau, &p, &floor).into_inner()).collect();
            if let Ok(brute) = brute_force_plan(&p, hi, &grid, &1e-12, regime) {
                prop_assert!(plan.phi <= brute.phi * (1.0 + 1e-12));
            }
        }
    }
}

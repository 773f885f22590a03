//! Property suites: statistics, the investment optimiser, LLS share
//! conservation, price positivity and determinism.
//!
//! ```text
//! cargo test -p abcem-core --test properties
//! ```

mod common;

use common::Family;
use proptest::prelude::*;

proptest! {
    #[test]
    fn statistics_match_brute_force(
        samples in prop::collection::vec(-10.0f64..10.0, 30..400),
        max_lag in 0usize..20,
    ) {
        prop_assume!(samples.iter().any(|&x| x != samples[0]));
        common::check_statistics(&samples, max_lag).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn heavy_tailed_statistics_match_brute_force(
        base in prop::collection::vec(-1.0f64..1.0, 50..300),
        spikes in prop::collection::vec((0usize..50, -50.0f64..50.0), 1..4),
    ) {
        let mut samples = base;
        for (i, v) in spikes {
            samples[i] = v;
        }
        prop_assume!(samples.iter().any(|&x| x != samples[0]));
        common::check_statistics(&samples, 10).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn optimiser_agrees_with_grid(
        window in prop::collection::vec(-0.5f64..0.6, 1..40),
        r in 0.0f64..0.1,
        delta_t in prop_oneof![Just(1.0), Just(0.1), Just(0.01), 0.01f64..1.0],
    ) {
        common::check_optimizer(&window, r, delta_t).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lls_clearance_conserves_shares(
        seed in any::<u64>(),
        agents in 1usize..60,
        sigma_gamma in prop_oneof![Just(0.0), 0.0f64..0.3],
    ) {
        common::check_share_conservation(seed, agents, sigma_gamma, 60).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn prices_stay_positive(
        seed in any::<u64>(),
        family in prop_oneof![
            (0.0f64..4.0).prop_map(|theta| Family::Cross { theta }),
            (0.0f64..0.3).prop_map(|sigma_gamma| Family::Lls { sigma_gamma }),
            Just(Family::Harras),
        ],
        side in 2usize..12,
    ) {
        let config = common::small_config(family, side * side, 300, seed);
        common::check_price_positivity(&config).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn runs_are_deterministic(
        seed in any::<u64>(),
        family in prop_oneof![
            Just(Family::Cross { theta: 2.0 }),
            Just(Family::Lls { sigma_gamma: 0.2 }),
            Just(Family::Harras),
        ],
    ) {
        let config = common::small_config(family, 16, 100, seed);
        common::check_determinism(&config).map_err(TestCaseError::fail)?;
    }
}

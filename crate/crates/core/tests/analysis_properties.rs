#[path = "support/oracles.rs"]
mod oracles;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn t_metric_laws(seed in any::<u64>()) {
        let case = oracles::random_t_case(&mut ChaCha8Rng::seed_from_u64(seed));
        oracles::check_t_case(&case).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn similarity_matches_brute_force(attribute in "[abcde_]{1,14}", keyword in "[abcde]{1,9}") {
        oracles::check_similarity(&attribute, &keyword).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn similarity_is_bounded(attribute in "\\PC{0,20}", keyword in "\\PC{0,12}") {
        let s = teiresias_core::analysis::similarity(&attribute, &keyword);
        prop_assert!((0.0..=100.0).contains(&s));
    }
}

#[test]
fn similarity_fixtures() {
    oracles::check_similarity_fixtures().unwrap();
}

#[test]
fn threshold_boundary_is_exact() {
    // Five characters, two edits: exactly 60.
    assert_eq!(teiresias_core::analysis::similarity("abcxy", "abcde"), 60.0);
    oracles::check_similarity("abcxy", "abcde").unwrap();
}

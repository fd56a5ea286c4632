mod common;

use proptest::prelude::*;
use proptest::test_runner::Config;

use common::*;

proptest! {
    #![proptest_config(Config { cases: CASES, failure_persistence: None, ..Config::default() })]

    #[test]
    fn simplex_projection_is_feasible_and_idempotent(v in any_vector()) {
        simplex_projection(v)?;
    }

    #[test]
    fn cosine_distance_bounded_symmetric_scale_free(case in vector_pair()) {
        cosine_properties(case)?;
    }

    #[test]
    fn idx_round_trips(t in idx_tensor()) {
        idx_round_trip(t)?;
    }

    #[test]
    fn split_reconstitutes_pool(case in split_case()) {
        split_reconstitutes(case)?;
    }

    #[test]
    fn interpolation_stays_on_simplex(case in interpolation_case()) {
        interpolation_on_simplex(case)?;
    }

    #[test]
    fn first_step_uses_frozen_model(case in first_step_case()) {
        first_step_is_frozen(case)?;
    }
}

#[test]
fn gradients_match_finite_differences() {
    let (ce, risk) = gradient_check(20);
    assert!(ce <= 1e-4, "cross-entropy gradient error {ce}");
    assert!(risk <= 1e-4, "risk gradient error {risk}");
}

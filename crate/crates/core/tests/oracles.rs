//! One full step of each model family against hand-computed values.

mod common;

use common::Check;

fn assert_all(checks: Vec<Check>) {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passes())
        .map(|c| format!("{}: got {:e}, want {:e} (error {:e})", c.name, c.got, c.want, c.error()))
        .collect();
    assert!(failed.is_empty(), "{}", failed.join("\n"));
}

#[test]
fn cross_step_matches_hand_computation() {
    assert_all(common::cross_step());
}

#[test]
fn lls_step_matches_hand_computation() {
    assert_all(common::lls_step());
}

#[test]
fn harras_steps_match_hand_computation() {
    assert_all(common::harras_steps());
}

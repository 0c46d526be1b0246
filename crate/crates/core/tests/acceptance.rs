//! Acceptance suite: each criterion prints a PASS/FAIL line and asserts.
//!
//! Criteria 1–6 are the fast property suite (also behind `cwtalar
//! selftest`); 7–11 are the desk-scale experiment gates (behind
//! `cwtalar selftest --full`).

use cwtalar::selftest::{self, CriterionResult};

fn check(result: CriterionResult) {
    println!("{}", result.line());
    assert!(result.passed, "{}", result.line());
}

#[test]
fn criterion_01_kernel_vs_mc_oracle() {
    check(selftest::criterion_1_kernel_vs_oracle());
}

#[test]
fn criterion_02_exactness_anchors() {
    check(selftest::criterion_2_exactness_anchors());
}

#[test]
fn criterion_03_gradient_integrity() {
    check(selftest::criterion_3_gradient_integrity());
}

#[test]
fn criterion_04_generator_sanity() {
    check(selftest::criterion_4_generator_sanity());
}

#[test]
fn criterion_05_reductions() {
    check(selftest::criterion_5_reductions());
}

#[test]
fn criterion_06_determinism() {
    check(selftest::criterion_6_determinism());
}

#[test]
fn criterion_07_idl_ordering() {
    check(selftest::criterion_7_idl_ordering());
}

#[test]
fn criterion_08_icl_collapse_and_rescue() {
    check(selftest::criterion_8_icl_collapse_and_rescue());
}

#[test]
fn criterion_09_itl_competence() {
    check(selftest::criterion_9_itl_competence());
}

#[test]
fn criterion_10_permuted_idl() {
    check(selftest::criterion_10_permuted_idl());
}

#[test]
fn criterion_11_drift_suppression() {
    check(selftest::criterion_11_drift_suppression());
}

//! The ten acceptance criteria at their bundled tolerances. Each test prints
//! one PASS/FAIL line to stderr, which the test harness does not capture.

use std::io::Write;

use sublin_cli::{run_check, CheckOutcome, SuiteConfig};

const SEED: u64 = 0;

fn criterion(id: u32) -> CheckOutcome {
    let outcome = run_check(id, &SuiteConfig::defaults(), SEED).unwrap_or_else(|e| panic!("criterion {id}: {e}"));
    let _ = writeln!(std::io::stderr(), "{}", outcome.line());
    outcome
}

fn assert_pass(id: u32) {
    let o = criterion(id);
    assert!(o.passed, "criterion {id} failed: {}\n{:#}", o.summary, o.details);
}

#[test]
fn criterion_01_choquet_envelope() {
    assert_pass(1);
}

#[test]
fn criterion_02_dp_oracle() {
    assert_pass(2);
}

#[test]
fn criterion_03_axioms() {
    assert_pass(3);
}

#[test]
fn criterion_04_exponential_inequality() {
    assert_pass(4);
}

/// The full criterion. Its second half asks the `x^-2` partial sums to keep
/// growing by non-decreasing amounts, but those increments shrink slowly for
/// every admissible `p`, so this cannot pass. Run with `--include-ignored`.
#[test]
#[ignore = "unattainable as stated: x^-2 increments decrease; see README"]
fn criterion_05_series_lemma() {
    assert_pass(5);
}

/// The parts of criterion 5 that can hold: the `x^-3` series are Cauchy and
/// every closed-form oracle agrees.
#[test]
fn criterion_05_series_lemma_attainable_parts() {
    let o = criterion(5);
    assert_eq!(o.details["first_half"], true, "{:#}", o.details);
    assert_eq!(o.details["oracle_ok"], true, "{:#}", o.details);
}

#[test]
fn criterion_06_plateau_divergence() {
    assert_pass(6);
}

#[test]
fn criterion_07_optimality_bracket() {
    assert_pass(7);
}

#[test]
fn criterion_08_ma_residual() {
    assert_pass(8);
}

#[test]
fn criterion_09_ma_lil_band() {
    assert_pass(9);
}

#[test]
fn criterion_10_determinism() {
    assert_pass(10);
}

//! Acceptance gate: ten numbered criteria, one test each.
//!
//! Every criterion delegates to the matching verification suite (the same
//! code behind `ptlab verify --suite ..`) and prints a single
//! `[PASS]`/`[FAIL]` line naming the criterion; on failure the offending
//! cases are listed with their measured values. Suite results are cached
//! in-process, so across the whole binary each suite is computed once here
//! plus once more inside the byte-identity criterion, which compares a
//! fresh run against the cache.
//!
//! Tests are prefixed `c01_`..`c10_` so the default alphabetical order of
//! the harness matches the criterion numbering.

use serde_json::Value;

use ptlab::suites;

fn suite_report(suite: &str) -> Value {
    serde_json::from_str(&suites::cached_suite_json(suite)).expect("suite report parses")
}

fn check(criterion: usize, label: &str, suite: &str) {
    let report = suite_report(suite);
    let passed = report["passed"].as_bool().expect("passed flag");
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("[{verdict}] criterion {criterion}: {label}");
    if !passed {
        for case in report["cases"].as_array().expect("cases array") {
            if case["passed"] != Value::Bool(true) {
                println!("    failing case {}: {}", case["name"], case["values"]);
            }
        }
    }
    assert!(
        passed,
        "criterion {criterion} ({label}): suite {suite:?} reported failures"
    );
}

#[test]
fn c01_rescaling_by_two_is_exact_for_perimeter_and_tight_for_transport() {
    check(
        1,
        "doubling the lattice scales the perimeter exactly and the transport within 5%",
        "scaling",
    );
}

#[test]
fn c02_transport_stays_under_the_ball_target_bound() {
    check(
        2,
        "W_p never exceeds the closed-form ball-target bound on 50 random sets",
        "transport-bound",
    );
}

#[test]
fn c03_displacements_fit_the_window_and_enlarging_it_changes_nothing() {
    check(
        3,
        "optimal displacements respect the a-priori radius; a larger window leaves W unchanged",
        "displacement",
    );
}

#[test]
fn c04_plans_are_integral_and_targets_disjoint_exactly() {
    check(
        4,
        "every plan moves whole cells onto fresh cells: inflows are 0 or h^d, overlap is zero",
        "integrality",
    );
}

#[test]
fn c05_rearrangement_certificates_hold_on_multi_component_sets() {
    check(
        5,
        "volume, disjointness, perimeter, transport, and containment certificates all pass",
        "rearrange",
    );
}

#[test]
fn c06_split_improvement_accepts_only_qualifying_strict_gains() {
    check(
        6,
        "qualifying splits strictly lower the recomputed energy; ratio violations are rejected",
        "improvement",
    );
}

#[test]
fn c07_line_annealing_matches_the_equal_intervals_table() {
    check(
        7,
        "annealed energies land within 2% of the interval table and match its component count",
        "oracle-1d",
    );
}

#[test]
fn c08_solver_matches_brute_force_on_all_tiny_instances() {
    check(
        8,
        "the solver equals a certified exhaustive optimum on every set of up to six cells",
        "brute-force",
    );
}

#[test]
fn c09_asymmetry_vanishes_with_the_deficit() {
    check(
        9,
        "the asymmetry-to-sqrt-deficit ratio stays bounded as perturbations shrink",
        "iso-deficit",
    );
}

#[test]
fn c10_repeated_runs_are_byte_identical() {
    check(
        10,
        "re-running every suite reproduces its JSON report byte for byte",
        "determinism",
    );
}

//! One test per acceptance criterion. Each prints a PASS/FAIL line followed
//! by the individual comparisons; run with `--nocapture` to see them.

use tfqkd::validation::{self, CriterionOutcome, MonteCarloSizes, Tolerances};
use tfqkd_validation::{combo, print_outcome, rows};

fn report(out: CriterionOutcome) {
    print_outcome(&out);
    assert!(out.passed(), "{}", out.line());
}

#[test]
fn criterion_1_measured_key_rates() {
    report(validation::criterion_1(&rows(), &Tolerances::default()).unwrap());
}

#[test]
fn criterion_2_yield_matrix_rate() {
    report(validation::criterion_2(&combo(), &Tolerances::default()).unwrap());
}

#[test]
fn criterion_3_capacity_bound() {
    report(validation::criterion_3(&rows(), &combo(), &Tolerances::default()).unwrap());
}

#[test]
fn criterion_4_gain_scaling() {
    report(validation::criterion_4(&Tolerances::default(), &MonteCarloSizes::default()).unwrap());
}

#[test]
fn criterion_5_supremacy_region() {
    report(validation::criterion_5(&Tolerances::default()).unwrap());
}

#[test]
fn criterion_6_qber_model() {
    report(validation::criterion_6(&rows(), &Tolerances::default()).unwrap());
}

#[test]
fn criterion_7_decoy_bounds() {
    report(validation::criterion_7(MonteCarloSizes::default().seed).unwrap());
}

#[test]
fn criterion_8_phase_feedback() {
    report(validation::criterion_8(&Tolerances::default(), &MonteCarloSizes::default()).unwrap());
}

#[test]
fn criterion_9_intrinsic_misalignment() {
    report(validation::criterion_9(&Tolerances::default(), &MonteCarloSizes::default()).unwrap());
}

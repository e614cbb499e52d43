//! Acceptance run over the bundled measurement tables. The `acceptance`
//! test target holds one test per criterion; `tfqkd validate` runs the same
//! checks from the command line.

use tfqkd::data::{bundled_attenuation_rows, bundled_combo_rows, AttenuationRow, ComboRow};
use tfqkd::validation::CriterionOutcome;

pub fn rows() -> Vec<AttenuationRow> {
    bundled_attenuation_rows().expect("bundled attenuation table loads")
}

pub fn combo() -> ComboRow {
    bundled_combo_rows().expect("bundled combination table loads").remove(0)
}

/// Prints the verdict line and the individual comparisons.
pub fn print_outcome(out: &CriterionOutcome) {
    println!("{}", out.line());
    println!("{}", out.details());
}

//! Decoy-state estimation: closed-form vacuum/single-photon bounds and the
//! yield-matrix linear program used for the phase-error bound.

mod closed;
pub mod simplex;
mod yields;

pub use closed::{e1_upper, y0_lower, y1_lower, DecoyInputs};
pub use yields::{phase_error_curty, yield_matrix_upper_bounds, GainTable, YieldMatrixBounds};

use serde::{Deserialize, Serialize};

/// An estimate together with its unclamped value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: f64,
    pub raw: f64,
}

impl Bounded {
    pub(crate) fn clamp(raw: f64, lo: f64, hi: f64) -> Self {
        Self {
            value: raw.clamp(lo, hi),
            raw,
        }
    }

    pub fn clamped(&self) -> bool {
        self.value != self.raw
    }
}

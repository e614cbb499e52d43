use serde::{Deserialize, Serialize};

use crate::params::ProtocolVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateFlag {
    /// Raw rate was negative and is reported as zero.
    NegativeRate,
    Y0Clamped,
    Y1Clamped,
    E1Clamped,
    E1xClamped,
    /// Parameter estimation failed; the rate is zero and `note` says why.
    EstimationFailed,
}

/// Secret key rate of one protocol at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub variant: ProtocolVariant,
    pub loss_db: Option<f64>,
    pub skr_bits_per_second: f64,
    pub skr_bits_per_gate: f64,
    /// Unclamped rate per gate; negative when the protocol yields no key.
    pub raw_bits_per_gate: f64,
    pub y0_lower: Option<f64>,
    pub y1_lower: Option<f64>,
    pub e1_upper: Option<f64>,
    pub e1x_upper: Option<f64>,
    pub skc0_ideal_bps: Option<f64>,
    pub skc0_realistic_bps: Option<f64>,
    pub supremacy_ratio: Option<f64>,
    pub flags: Vec<RateFlag>,
    pub note: Option<String>,
}

impl KeyRateReport {
    pub(crate) fn new(variant: ProtocolVariant, raw_bits_per_gate: f64, clock_rate_hz: f64) -> Self {
        let per_gate = raw_bits_per_gate.clamp(0.0, 1.0);
        let mut flags = Vec::new();
        if raw_bits_per_gate < 0.0 {
            flags.push(RateFlag::NegativeRate);
        }
        Self {
            variant,
            loss_db: None,
            skr_bits_per_second: per_gate * clock_rate_hz,
            skr_bits_per_gate: per_gate,
            raw_bits_per_gate,
            y0_lower: None,
            y1_lower: None,
            e1_upper: None,
            e1x_upper: None,
            skc0_ideal_bps: None,
            skc0_realistic_bps: None,
            supremacy_ratio: None,
            flags,
            note: None,
        }
    }

    pub(crate) fn failed(variant: ProtocolVariant, reason: String) -> Self {
        let mut r = Self::new(variant, 0.0, 0.0);
        r.flags.push(RateFlag::EstimationFailed);
        r.note = Some(reason);
        r
    }

    pub(crate) fn flag(&mut self, flag: RateFlag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
            self.flags.sort();
        }
    }

    pub fn has_flag(&self, flag: RateFlag) -> bool {
        self.flags.contains(&flag)
    }
}

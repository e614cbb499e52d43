//! Link, detector and protocol parameter sets.
//!
//! All parameter types are plain values. Fields are public so that they can be
//! loaded from configuration files; call `validate` (or use the checked
//! constructors) before handing them to the models.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::units::db_to_transmittance;

/// Ultra-low-loss fibre attenuation used for the equivalent-distance axis.
pub const ULL_FIBRE_ALPHA_DB_PER_KM: f64 = 0.16;
pub const SNSPD_EFFICIENCY: f64 = 0.44;
pub const CHARLIE_COUPLING: f64 = 0.70;
/// Zero-intensity gain of D1 measured with both users silent.
pub const MEASURED_VACUUM_GAIN: f64 = 25.9e-9;
pub const DARK_COUNT_RATE_HZ: f64 = 22.0;

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

fn default_alpha() -> f64 {
    ULL_FIBRE_ALPHA_DB_PER_KM
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Alice-to-Bob loss, both arms combined.
    pub total_loss_db: f64,
    /// Alice-arm loss minus Bob-arm loss.
    #[serde(default)]
    pub asymmetry_db: f64,
    #[serde(default = "default_alpha")]
    pub fibre_alpha_db_per_km: f64,
    /// Detector efficiency times coupling inside Charlie's station.
    pub charlie_efficiency: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            total_loss_db: 0.0,
            asymmetry_db: 0.0,
            fibre_alpha_db_per_km: ULL_FIBRE_ALPHA_DB_PER_KM,
            charlie_efficiency: SNSPD_EFFICIENCY * CHARLIE_COUPLING,
        }
    }
}

impl ChannelParams {
    /// Symmetric link with the reference station efficiency.
    pub fn symmetric(total_loss_db: f64) -> Result<Self> {
        let c = Self {
            total_loss_db,
            ..Self::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn from_arm_losses(alice_db: f64, bob_db: f64) -> Result<Self> {
        let c = Self {
            total_loss_db: alice_db + bob_db,
            asymmetry_db: alice_db - bob_db,
            ..Self::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_total_loss(&self, total_loss_db: f64) -> Result<Self> {
        let c = Self {
            total_loss_db,
            ..*self
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_charlie_efficiency(&self, eff: f64) -> Result<Self> {
        let c = Self {
            charlie_efficiency: eff,
            ..*self
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_loss_db >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "total_loss_db = {} must be non-negative",
                self.total_loss_db
            )));
        }
        if self.asymmetry_db.abs() > self.total_loss_db {
            return Err(Error::InvalidParameter(format!(
                "asymmetry {} dB exceeds total loss {} dB",
                self.asymmetry_db, self.total_loss_db
            )));
        }
        if !(self.fibre_alpha_db_per_km > 0.0) {
            return Err(Error::InvalidParameter("fibre attenuation must be positive".into()));
        }
        check_prob("charlie_efficiency", self.charlie_efficiency)
    }

    /// Loss of the Alice and Bob arms, `(L/2 + a/2, L/2 - a/2)`.
    pub fn arm_losses_db(&self) -> (f64, f64) {
        let half = self.total_loss_db / 2.0;
        let skew = self.asymmetry_db / 2.0;
        (half + skew, half - skew)
    }

    pub fn arm_transmittances(&self) -> Result<(f64, f64)> {
        let (a, b) = self.arm_losses_db();
        Ok((db_to_transmittance(a)?, db_to_transmittance(b)?))
    }

    pub fn transmittance(&self) -> Result<f64> {
        db_to_transmittance(self.total_loss_db)
    }

    pub fn equivalent_distance_km(&self) -> f64 {
        self.total_loss_db / self.fibre_alpha_db_per_km
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub dark_count_rate_hz: f64,
    pub detection_efficiency: f64,
    pub coupling_efficiency: f64,
    /// Effective encoding rate (reference gates excluded).
    pub clock_rate_hz: f64,
    /// Detection window that converts the dark-count rate into a per-gate probability.
    pub gate_width_s: f64,
    /// First-order interference visibility, OPLL noise included.
    pub visibility: f64,
    /// Error floor from the encoder electronics, added to the visibility error.
    #[serde(default)]
    pub modulation_error: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            dark_count_rate_hz: DARK_COUNT_RATE_HZ,
            detection_efficiency: SNSPD_EFFICIENCY,
            coupling_efficiency: CHARLIE_COUPLING,
            clock_rate_hz: 1e9,
            // Window chosen so that rate x window equals the measured vacuum gain.
            gate_width_s: MEASURED_VACUUM_GAIN / DARK_COUNT_RATE_HZ,
            visibility: 0.964,
            modulation_error: 0.0005,
        }
    }
}

impl DetectorParams {
    /// Perfect detectors: no dark counts, unit visibility, no modulation error.
    pub fn noiseless() -> Self {
        Self {
            dark_count_rate_hz: 0.0,
            detection_efficiency: 1.0,
            coupling_efficiency: 1.0,
            visibility: 1.0,
            modulation_error: 0.0,
            ..Self::default()
        }
    }

    pub fn without_dark_counts(&self) -> Self {
        Self {
            dark_count_rate_hz: 0.0,
            ..*self
        }
    }

    pub fn dark_probability(&self) -> f64 {
        self.dark_count_rate_hz * self.gate_width_s
    }

    pub fn validate(&self) -> Result<()> {
        check_prob("detection_efficiency", self.detection_efficiency)?;
        check_prob("coupling_efficiency", self.coupling_efficiency)?;
        check_prob("visibility", self.visibility)?;
        check_prob("modulation_error", self.modulation_error)?;
        if !(self.dark_count_rate_hz >= 0.0 && self.gate_width_s > 0.0 && self.clock_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(
                "dark count rate, gate width and clock rate must be positive".into(),
            ));
        }
        let p = self.dark_probability();
        if p >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "per-gate dark-count probability {p} must be below 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntensityLabel {
    #[serde(rename = "u")]
    U,
    #[serde(rename = "v")]
    V,
    #[serde(rename = "w")]
    W,
}

impl IntensityLabel {
    pub const ALL: [IntensityLabel; 3] = [IntensityLabel::U, IntensityLabel::V, IntensityLabel::W];

    pub fn as_char(self) -> char {
        match self {
            IntensityLabel::U => 'u',
            IntensityLabel::V => 'v',
            IntensityLabel::W => 'w',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'u' => Some(IntensityLabel::U),
            'v' => Some(IntensityLabel::V),
            'w' => Some(IntensityLabel::W),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for IntensityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum User {
    Alice,
    Bob,
}

/// Per-user mean photon numbers of the signal, decoy and vacuum-surrogate states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityTriple {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl IntensityTriple {
    pub fn new(u: f64, v: f64, w: f64) -> Result<Self> {
        let t = Self { u, v, w };
        t.validate()?;
        Ok(t)
    }

    pub fn get(&self, label: IntensityLabel) -> f64 {
        [self.u, self.v, self.w][label.index()]
    }

    /// Totals `u_a + u_b` etc. for a symmetric setting.
    pub fn totals(&self) -> IntensityTriple {
        IntensityTriple {
            u: 2.0 * self.u,
            v: 2.0 * self.v,
            w: 2.0 * self.w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u >= 0.0 && self.v >= 0.0 && self.w >= 0.0) {
            return Err(Error::InvalidParameter("intensities must be non-negative".into()));
        }
        if self.u == self.v {
            return Err(Error::InvalidParameter("signal and decoy intensities must differ".into()));
        }
        if self.w >= self.u.min(self.v) {
            return Err(Error::InvalidParameter(
                "vacuum surrogate must be the weakest intensity".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolVariant {
    Original,
    SendNotSend,
    Curty,
}

impl ProtocolVariant {
    pub const ALL: [ProtocolVariant; 3] = [
        ProtocolVariant::Original,
        ProtocolVariant::SendNotSend,
        ProtocolVariant::Curty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolVariant::Original => "original",
            ProtocolVariant::SendNotSend => "send-not-send",
            ProtocolVariant::Curty => "curty",
        }
    }
}

impl fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProtocolVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "original" => Ok(ProtocolVariant::Original),
            "send-not-send" | "sendnotsend" | "sns" => Ok(ProtocolVariant::SendNotSend),
            "curty" => Ok(ProtocolVariant::Curty),
            other => Err(Error::InvalidParameter(format!("unknown protocol `{other}`"))),
        }
    }
}

/// How the global phases are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhaseRandomisation {
    /// Evenly spaced levels over [0, 2π).
    Discrete { levels: u32 },
    Continuous,
}

impl Default for PhaseRandomisation {
    fn default() -> Self {
        PhaseRandomisation::Discrete { levels: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub variant: ProtocolVariant,
    /// Per-user intensities.
    pub intensities: IntensityTriple,
    /// Selection probabilities of u, v, w in the decoy (phase-randomised) basis.
    pub intensity_probs: [f64; 3],
    pub phase_slices_m: u32,
    /// Twin-phase tolerance Δ in radians, applied modulo π.
    pub tolerance_delta: f64,
    /// Send probability in the send-not-send Z basis.
    pub epsilon: f64,
    pub y_cut: u32,
    pub n_cut: u32,
    pub f_ec: f64,
    pub basis_prob_z: f64,
    #[serde(default)]
    pub phase_randomisation: PhaseRandomisation,
}

impl ProtocolConfig {
    /// Settings used for the measured data and the reference simulations.
    pub fn reference(variant: ProtocolVariant) -> Self {
        let intensities = match variant {
            ProtocolVariant::Original | ProtocolVariant::SendNotSend => IntensityTriple {
                u: 0.2,
                v: 0.08,
                w: 5e-6,
            },
            ProtocolVariant::Curty => IntensityTriple {
                u: 0.02,
                v: 0.2,
                w: 5e-6,
            },
        };
        Self {
            variant,
            intensities,
            intensity_probs: [0.5, 0.25, 0.25],
            phase_slices_m: 16,
            tolerance_delta: 0.0,
            epsilon: 0.078,
            y_cut: 5,
            n_cut: 20,
            f_ec: 1.15,
            basis_prob_z: 0.5,
            phase_randomisation: PhaseRandomisation::default(),
        }
    }

    /// Tolerance equal to one phase-slice width, 2π/M.
    pub fn slice_width(&self) -> f64 {
        2.0 * PI / self.phase_slices_m as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.intensities.validate()?;
        if self.phase_slices_m < 2 || self.phase_slices_m % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "phase slice count M = {} must be even and at least 2",
                self.phase_slices_m
            )));
        }
        if !(self.tolerance_delta >= 0.0) {
            return Err(Error::InvalidParameter("tolerance Δ must be non-negative".into()));
        }
        if self.y_cut >= self.n_cut {
            return Err(Error::InvalidParameter(format!(
                "y_cut ({}) must be smaller than n_cut ({})",
                self.y_cut, self.n_cut
            )));
        }
        if !(self.f_ec >= 1.0) {
            return Err(Error::InvalidParameter("f_ec must be at least 1".into()));
        }
        check_prob("epsilon", self.epsilon)?;
        check_prob("basis_prob_z", self.basis_prob_z)?;
        for (i, p) in self.intensity_probs.iter().enumerate() {
            check_prob(&format!("intensity_probs[{i}]"), *p)?;
        }
        let total: f64 = self.intensity_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "intensity probabilities sum to {total}, expected 1"
            )));
        }
        if let PhaseRandomisation::Discrete { levels } = self.phase_randomisation {
            if levels == 0 {
                return Err(Error::InvalidParameter("phase level count must be positive".into()));
            }
        }
        Ok(())
    }
}

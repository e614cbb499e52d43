use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::detect::{DetectionEvent, Detector};
use crate::error::Result;
use crate::params::{Basis, IntensityLabel, ProtocolConfig, ProtocolVariant, User};
use crate::tallies::{ComboKey, MeasurementTallies};

/// Slack on the twin-phase comparison for floating-point phases.
const PHASE_EPS: f64 = 1e-9;

/// Public record of one announced gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Announcement {
    pub gate_index: u64,
    pub detector: Detector,
    pub alice_basis: Basis,
    pub bob_basis: Basis,
    pub alice_intensity: Option<IntensityLabel>,
    pub bob_intensity: Option<IntensityLabel>,
    pub alice_phase: Option<f64>,
    pub bob_phase: Option<f64>,
}

/// Announcement for a single-click event, `None` otherwise.
///
/// Bases are always public. Global phases and intensities are announced in
/// both bases for the original protocol and only in the test basis for
/// send-not-send. The Curty variant never announces global phases.
pub fn announce(e: &DetectionEvent, variant: ProtocolVariant) -> Option<Announcement> {
    if !matches!(e.detector, Detector::D1 | Detector::D2) {
        return None;
    }
    let (intensities, phases) = match variant {
        ProtocolVariant::Original => (true, true),
        ProtocolVariant::SendNotSend => {
            let test = e.alice.basis == Basis::X && e.bob.basis == Basis::X;
            (test, test)
        }
        ProtocolVariant::Curty => (e.alice.basis == Basis::X && e.bob.basis == Basis::X, false),
    };
    Some(Announcement {
        gate_index: e.gate_index,
        detector: e.detector,
        alice_basis: e.alice.basis,
        bob_basis: e.bob.basis,
        alice_intensity: intensities.then_some(e.alice.intensity),
        bob_intensity: intensities.then_some(e.bob.intensity),
        alice_phase: phases.then_some(e.alice.global_phase),
        bob_phase: phases.then_some(e.bob.global_phase),
    })
}

/// `Some(flip)` when the phases are twins within `delta` modulo π.
pub fn twin_phases(phi_a: f64, phi_b: f64, delta: f64) -> Option<bool> {
    let d = (phi_a - phi_b).rem_euclid(2.0 * PI);
    let near_zero = d.min(2.0 * PI - d) <= delta + PHASE_EPS;
    let near_pi = (d - PI).abs() <= delta + PHASE_EPS;
    if near_zero {
        Some(false)
    } else if near_pi {
        Some(true)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboCounts {
    pub pulses: u64,
    pub d1: u64,
    pub d2: u64,
    pub double_clicks: u64,
    pub sifted_d1: u64,
    pub errors_d1: u64,
    pub sifted_d2: u64,
    pub errors_d2: u64,
}

impl ComboCounts {
    pub fn gain(&self) -> f64 {
        if self.pulses == 0 {
            0.0
        } else {
            self.d1 as f64 / self.pulses as f64
        }
    }

    pub fn qber_d1(&self) -> Option<f64> {
        (self.sifted_d1 > 0).then(|| self.errors_d1 as f64 / self.sifted_d1 as f64)
    }

    /// QBER over sifted clicks of either detector.
    pub fn qber_combined(&self) -> Option<f64> {
        let n = self.sifted_d1 + self.sifted_d2;
        (n > 0).then(|| (self.errors_d1 + self.errors_d2) as f64 / n as f64)
    }

    fn add(&mut self, o: &ComboCounts) {
        self.pulses += o.pulses;
        self.d1 += o.d1;
        self.d2 += o.d2;
        self.double_clicks += o.double_clicks;
        self.sifted_d1 += o.sifted_d1;
        self.errors_d1 += o.errors_d1;
        self.sifted_d2 += o.sifted_d2;
        self.errors_d2 += o.errors_d2;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedBit {
    pub basis: Basis,
    pub alice: u8,
    pub bob: u8,
    /// Counts towards the raw key.
    pub key: bool,
}

impl SiftedBit {
    pub fn is_error(&self) -> bool {
        self.alice != self.bob
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboRecord {
    #[serde(flatten)]
    pub key: ComboKey,
    #[serde(flatten)]
    pub counts: ComboCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiftResult {
    pub tallies: MeasurementTallies,
    pub counts: Vec<ComboRecord>,
    /// Key-basis bit pairs, in gate order, up to the requested cap.
    pub raw_key: Vec<(u8, u8)>,
    pub key_bits: u64,
    pub key_errors: u64,
}

impl SiftResult {
    /// Counts summed over every intensity pair in `basis`.
    pub fn basis_counts(&self, basis: Basis) -> ComboCounts {
        let mut total = ComboCounts::default();
        for r in self.counts.iter().filter(|r| r.key.basis == basis) {
            total.add(&r.counts);
        }
        total
    }
}

fn basis_index(b: Basis) -> usize {
    match b {
        Basis::Z => 0,
        Basis::X => 1,
    }
}

fn label_index(l: IntensityLabel) -> usize {
    match l {
        IntensityLabel::U => 0,
        IntensityLabel::V => 1,
        IntensityLabel::W => 2,
    }
}

/// Streaming sifting of detection events.
#[derive(Debug, Clone)]
pub struct Sifter {
    cfg: ProtocolConfig,
    counts: [[[ComboCounts; 3]; 3]; 2],
    raw_key: Vec<(u8, u8)>,
    key_cap: usize,
    key_bits: u64,
    key_errors: u64,
}

impl Sifter {
    pub fn new(cfg: &ProtocolConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            counts: Default::default(),
            raw_key: Vec::new(),
            key_cap: 0,
            key_bits: 0,
            key_errors: 0,
        }
    }

    /// Keep up to `cap` raw key bit pairs.
    pub fn with_raw_key(mut self, cap: usize) -> Self {
        self.key_cap = cap;
        self
    }

    /// Accounts one encoded gate; returns the sifted bit pair when kept.
    /// Gates where the users chose different bases are dropped entirely.
    pub fn push(&mut self, e: &DetectionEvent) -> Option<SiftedBit> {
        if e.alice.is_reference || e.bob.is_reference || e.alice.basis != e.bob.basis {
            return None;
        }
        let basis = e.alice.basis;
        let c = &mut self.counts[basis_index(basis)][label_index(e.alice.intensity)][label_index(e.bob.intensity)];
        c.pulses += 1;
        if e.double_click {
            c.double_clicks += 1;
        }
        let ann = announce(e, self.cfg.variant)?;
        match ann.detector {
            Detector::D1 => c.d1 += 1,
            Detector::D2 => c.d2 += 1,
            _ => {}
        }
        let bob_bit = match (self.cfg.variant, basis) {
            (ProtocolVariant::SendNotSend, Basis::Z) => e.bob.bit,
            (ProtocolVariant::Curty, Basis::Z) => {
                // constant, unannounced global phase: Δ = 0 by construction
                let flip = twin_phases(e.alice.global_phase, e.bob.global_phase, 0.0)?;
                e.bob.bit ^ flip as u8 ^ (ann.detector == Detector::D2) as u8
            }
            _ => {
                let (pa, pb) = (ann.alice_phase?, ann.bob_phase?);
                let flip = twin_phases(pa, pb, self.cfg.tolerance_delta)?;
                e.bob.bit ^ flip as u8 ^ (ann.detector == Detector::D2) as u8
            }
        };
        let key = basis == Basis::Z
            && (self.cfg.variant == ProtocolVariant::SendNotSend
                || (e.alice.intensity == IntensityLabel::U && e.bob.intensity == IntensityLabel::U));
        let bit = SiftedBit {
            basis,
            alice: e.alice.bit,
            bob: bob_bit,
            key,
        };
        let err = bit.is_error() as u64;
        if ann.detector == Detector::D1 {
            c.sifted_d1 += 1;
            c.errors_d1 += err;
        } else {
            c.sifted_d2 += 1;
            c.errors_d2 += err;
        }
        if key {
            self.key_bits += 1;
            self.key_errors += err;
            if self.raw_key.len() < self.key_cap {
                self.raw_key.push((bit.alice, bit.bob));
            }
        }
        Some(bit)
    }

    pub fn finish(self) -> Result<SiftResult> {
        let mut tallies = MeasurementTallies::new();
        let mut records = Vec::new();
        for basis in [Basis::Z, Basis::X] {
            for a in IntensityLabel::ALL {
                for b in IntensityLabel::ALL {
                    let c = self.counts[basis_index(basis)][label_index(a)][label_index(b)];
                    if c.pulses == 0 {
                        continue;
                    }
                    let key = ComboKey::new(a, b, basis);
                    tallies.insert(key, c.gain(), c.qber_d1(), c.pulses)?;
                    records.push(ComboRecord { key, counts: c });
                }
            }
        }
        if self.cfg.variant == ProtocolVariant::SendNotSend {
            use IntensityLabel::{U, W};
            let z = &self.counts[basis_index(Basis::Z)];
            let (ua, ub, none) = (
                z[label_index(U)][label_index(W)],
                z[label_index(W)][label_index(U)],
                z[label_index(W)][label_index(W)],
            );
            if ua.pulses > 0 {
                tallies.set_single_arm(User::Alice, U, ua.gain())?;
            }
            if ub.pulses > 0 {
                tallies.set_single_arm(User::Bob, U, ub.gain())?;
            }
            if none.pulses > 0 {
                tallies.set_vacuum_gain(none.gain())?;
            }
        }
        Ok(SiftResult {
            tallies,
            counts: records,
            raw_key: self.raw_key,
            key_bits: self.key_bits,
            key_errors: self.key_errors,
        })
    }
}

/// Sifts a complete event list.
pub fn sift(events: &[DetectionEvent], cfg: &ProtocolConfig) -> Result<SiftResult> {
    let mut s = Sifter::new(cfg).with_raw_key(usize::MAX);
    for e in events {
        s.push(e);
    }
    s.finish()
}

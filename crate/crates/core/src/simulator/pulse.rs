use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::{Basis, IntensityLabel, PhaseRandomisation, ProtocolConfig, ProtocolVariant, User};

/// One user's optical pulse for one gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseState {
    pub bit: u8,
    pub basis: Basis,
    /// Global phase φ in `[0, 2π)`.
    pub global_phase: f64,
    /// Index of φ in the discrete level set, when discrete.
    pub phase_level: Option<u32>,
    pub intensity: IntensityLabel,
    /// Mean photon number actually emitted (0 for a send-not-send "not send").
    pub mean_photon: f64,
    /// Unmodulated reference pulse; bit and basis are meaningless.
    pub is_reference: bool,
}

impl PulseState {
    /// `φ + απ + βπ/2` wrapped to `[0, 2π)`, with β = 0 for Z and 1 for X.
    pub fn encoded_phase(&self) -> f64 {
        let beta = match self.basis {
            Basis::Z => 0.0,
            Basis::X => 1.0,
        };
        (self.global_phase + self.bit as f64 * PI + beta * PI / 2.0).rem_euclid(2.0 * PI)
    }
}

fn sample_phase<R: Rng + ?Sized>(mode: PhaseRandomisation, rng: &mut R) -> (f64, Option<u32>) {
    match mode {
        PhaseRandomisation::Discrete { levels } => {
            let k = rng.random_range(0..levels);
            (2.0 * PI * k as f64 / levels as f64, Some(k))
        }
        PhaseRandomisation::Continuous => (rng.random::<f64>() * 2.0 * PI, None),
    }
}

fn sample_intensity<R: Rng + ?Sized>(probs: &[f64; 3], rng: &mut R) -> IntensityLabel {
    let x = rng.random::<f64>() * (probs[0] + probs[1] + probs[2]);
    if x < probs[0] {
        IntensityLabel::U
    } else if x < probs[0] + probs[1] {
        IntensityLabel::V
    } else {
        IntensityLabel::W
    }
}

/// Samples one encoded pulse.
///
/// Send-not-send Z pulses carry Alice's bit as "sent" and Bob's as "not
/// sent", so bits agree when exactly one user emits. Curty Z pulses keep a
/// fixed global phase.
pub fn prepare_pulse<R: Rng + ?Sized>(user: User, cfg: &ProtocolConfig, rng: &mut R) -> PulseState {
    let basis = if rng.random::<f64>() < cfg.basis_prob_z {
        Basis::Z
    } else {
        Basis::X
    };
    let mu = &cfg.intensities;
    match (cfg.variant, basis) {
        (ProtocolVariant::SendNotSend, Basis::Z) => {
            let sent = rng.random::<f64>() < cfg.epsilon;
            let (global_phase, phase_level) = sample_phase(cfg.phase_randomisation, rng);
            let bit = match user {
                User::Alice => sent as u8,
                User::Bob => (!sent) as u8,
            };
            PulseState {
                bit,
                basis,
                global_phase,
                phase_level,
                intensity: if sent { IntensityLabel::U } else { IntensityLabel::W },
                mean_photon: if sent { mu.u } else { 0.0 },
                is_reference: false,
            }
        }
        (ProtocolVariant::Curty, Basis::Z) => PulseState {
            bit: rng.random_range(0..2u8),
            basis,
            global_phase: 0.0,
            phase_level: Some(0),
            intensity: IntensityLabel::U,
            mean_photon: mu.u,
            is_reference: false,
        },
        _ => {
            let bit = rng.random_range(0..2u8);
            let intensity = sample_intensity(&cfg.intensity_probs, rng);
            let (global_phase, phase_level) = sample_phase(cfg.phase_randomisation, rng);
            PulseState {
                bit,
                basis,
                global_phase,
                phase_level,
                intensity,
                mean_photon: mu.get(intensity),
                is_reference: false,
            }
        }
    }
}

/// Unmodulated reference pulse at the signal intensity.
pub fn prepare_reference(cfg: &ProtocolConfig) -> PulseState {
    PulseState {
        bit: 0,
        basis: Basis::Z,
        global_phase: 0.0,
        phase_level: Some(0),
        intensity: IntensityLabel::U,
        mean_photon: cfg.intensities.u,
        is_reference: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encoded_phase_formula() {
        let p = PulseState {
            bit: 1,
            basis: Basis::Z,
            global_phase: 0.0,
            phase_level: Some(0),
            intensity: IntensityLabel::U,
            mean_photon: 0.2,
            is_reference: false,
        };
        assert_eq!(p.encoded_phase(), PI);
        let x = PulseState { basis: Basis::X, ..p };
        assert!((x.encoded_phase() - 1.5 * PI).abs() < 1e-15);
        let wrap = PulseState {
            global_phase: 1.5 * PI,
            ..x
        };
        assert!((wrap.encoded_phase() - PI).abs() < 1e-12);
    }

    #[test]
    fn send_not_send_always_sends() {
        let mut cfg = ProtocolConfig::reference(ProtocolVariant::SendNotSend);
        cfg.epsilon = 1.0;
        cfg.basis_prob_z = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = prepare_pulse(User::Alice, &cfg, &mut rng);
            assert_eq!(a.intensity, IntensityLabel::U);
            assert_eq!(a.mean_photon, cfg.intensities.u);
            assert_eq!(a.bit, 1);
            let b = prepare_pulse(User::Bob, &cfg, &mut rng);
            assert_eq!(b.bit, 0);
        }
    }

    #[test]
    fn curty_key_basis_phase_fixed() {
        let mut cfg = ProtocolConfig::reference(ProtocolVariant::Curty);
        cfg.basis_prob_z = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seen_x = false;
        for _ in 0..1000 {
            let p = prepare_pulse(User::Alice, &cfg, &mut rng);
            match p.basis {
                Basis::Z => {
                    assert_eq!(p.global_phase, 0.0);
                    assert_eq!(p.intensity, IntensityLabel::U);
                }
                Basis::X => seen_x |= p.global_phase != 0.0,
            }
        }
        assert!(seen_x);
    }

    #[test]
    fn phase_levels_uniform() {
        // chi-square over 32 levels, 10^6 samples; also each count within 5 sigma
        let cfg = ProtocolConfig::reference(ProtocolVariant::Original);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let mut counts = [0u64; 32];
        for _ in 0..n {
            let p = prepare_pulse(User::Alice, &cfg, &mut rng);
            counts[p.phase_level.unwrap() as usize] += 1;
        }
        let expect = n as f64 / 32.0;
        let sigma = (n as f64 * (1.0 / 32.0) * (31.0 / 32.0)).sqrt();
        let mut chi2 = 0.0;
        for c in counts {
            assert!((c as f64 - expect).abs() < 5.0 * sigma);
            chi2 += (c as f64 - expect).powi(2) / expect;
        }
        // 31 degrees of freedom, p = 0.999 quantile is about 61.1
        assert!(chi2 < 61.1, "{chi2}");
    }

    #[test]
    fn intensity_probabilities() {
        let mut cfg = ProtocolConfig::reference(ProtocolVariant::Original);
        cfg.intensity_probs = [0.0, 1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            assert_eq!(prepare_pulse(User::Bob, &cfg, &mut rng).intensity, IntensityLabel::V);
        }
    }
}

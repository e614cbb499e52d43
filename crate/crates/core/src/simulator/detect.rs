use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::pulse::PulseState;
use crate::error::Result;
use crate::params::{ChannelParams, DetectorParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
    /// Feedback detector, sees reference pulses only.
    D3,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub gate_index: u64,
    /// The announced detector; `None` for no click and for discarded double clicks.
    pub detector: Detector,
    pub double_click: bool,
    pub alice: PulseState,
    pub bob: PulseState,
    /// Relative channel phase seen by this gate.
    pub drift_at_gate: f64,
}

/// Charlie's beam splitter and detectors for fixed link parameters.
///
/// The field amplitudes `√(μ η) e^{iϕ}` of the two arms interfere; D1 sees
/// the sum and D2 the difference. The fringe contrast is raised above the
/// measured visibility by `e^{σ²/2}` so that, after the Gaussian OPLL phase
/// noise of variance `σ²`, the average contrast equals the visibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferometer {
    eta_a: f64,
    eta_b: f64,
    eta_c: f64,
    contrast: f64,
    no_dark: f64,
    opll_sigma: f64,
}

impl Interferometer {
    pub fn new(channel: &ChannelParams, det: &DetectorParams, opll_phase_variance: f64) -> Result<Self> {
        channel.validate()?;
        det.validate()?;
        let (eta_a, eta_b) = channel.arm_transmittances()?;
        Ok(Self {
            eta_a,
            eta_b,
            eta_c: channel.charlie_efficiency,
            contrast: (det.visibility * (opll_phase_variance / 2.0).exp()).min(1.0),
            no_dark: 1.0 - det.dark_probability(),
            opll_sigma: opll_phase_variance.max(0.0).sqrt(),
        })
    }

    /// Mean photon numbers reaching D1 and D2 for relative phase `delta`.
    pub fn intensities(&self, mu_a: f64, mu_b: f64, delta: f64) -> (f64, f64) {
        let fa = mu_a * self.eta_a;
        let fb = mu_b * self.eta_b;
        let mean = 0.5 * self.eta_c * (fa + fb);
        let fringe = self.eta_c * self.contrast * (fa * fb).sqrt() * delta.cos();
        ((mean + fringe).max(0.0), (mean - fringe).max(0.0))
    }

    /// Click probability of one detector receiving mean photon number `i`.
    pub fn click_probability(&self, i: f64) -> f64 {
        1.0 - self.no_dark * (-i).exp()
    }

    /// Click probability of the feedback detector for a reference pulse pair
    /// at channel phase offset `offset` from the fringe minimum.
    pub fn reference_click_probability(&self, mu: f64, offset: f64) -> f64 {
        // D3 sits on the destructive port: C0 + C1 (1 - cos offset)
        let (_, dark_port) = self.intensities(mu, mu, offset);
        self.click_probability(dark_port)
    }

    pub fn detect<R: Rng + ?Sized>(
        &self,
        gate_index: u64,
        alice: PulseState,
        bob: PulseState,
        channel_phase: f64,
        rng: &mut R,
    ) -> DetectionEvent {
        let mut delta = alice.encoded_phase() - bob.encoded_phase() + channel_phase;
        if self.opll_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            delta += self.opll_sigma * z;
        }
        let (i1, i2) = self.intensities(alice.mean_photon, bob.mean_photon, delta);
        let c1 = rng.random::<f64>() < self.click_probability(i1);
        let c2 = rng.random::<f64>() < self.click_probability(i2);
        let detector = match (c1, c2) {
            (true, false) => Detector::D1,
            (false, true) => Detector::D2,
            _ => Detector::None,
        };
        DetectionEvent {
            gate_index,
            detector,
            double_click: c1 && c2,
            alice,
            bob,
            drift_at_gate: channel_phase,
        }
    }
}

/// Convenience form of [`Interferometer::detect`] building the interferometer
/// for a single gate.
pub fn interfere_and_detect<R: Rng + ?Sized>(
    a: PulseState,
    b: PulseState,
    residual_phase: f64,
    channel: &ChannelParams,
    det: &DetectorParams,
    opll_phase_variance: f64,
    rng: &mut R,
) -> Result<DetectionEvent> {
    Ok(Interferometer::new(channel, det, opll_phase_variance)?.detect(0, a, b, residual_phase, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Basis, IntensityLabel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pulse(phase: f64, mu: f64) -> PulseState {
        PulseState {
            bit: 0,
            basis: Basis::Z,
            global_phase: phase,
            phase_level: None,
            intensity: IntensityLabel::U,
            mean_photon: mu,
            is_reference: false,
        }
    }

    fn ideal() -> Interferometer {
        let ch = ChannelParams::symmetric(0.0).unwrap().with_charlie_efficiency(1.0).unwrap();
        Interferometer::new(&ch, &DetectorParams::noiseless(), 0.0).unwrap()
    }

    #[test]
    fn constructive_fringe() {
        let i = ideal();
        let (i1, i2) = i.intensities(0.3, 0.3, 0.0);
        assert!((i1 - 0.6).abs() < 1e-12 && i2.abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for g in 0..1000 {
            let e = i.detect(g, pulse(0.0, 0.3), pulse(0.0, 0.3), 0.0, &mut rng);
            assert_ne!(e.detector, Detector::D2);
        }
    }

    #[test]
    fn pi_swaps_detectors() {
        let i = ideal();
        let (a1, a2) = i.intensities(0.3, 0.2, 0.4);
        let (b1, b2) = i.intensities(0.3, 0.2, 0.4 + PI);
        assert!((a1 - b2).abs() < 1e-12 && (a2 - b1).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for g in 0..1000 {
            let e = i.detect(g, pulse(PI, 0.3), pulse(0.0, 0.3), 0.0, &mut rng);
            assert_ne!(e.detector, Detector::D1);
        }
    }

    #[test]
    fn visibility_limits_contrast() {
        let ch = ChannelParams::symmetric(0.0).unwrap();
        let det = DetectorParams::default().without_dark_counts();
        let i = Interferometer::new(&ch, &det, 0.0).unwrap();
        let (i1, i2) = i.intensities(0.2, 0.2, 0.0);
        assert!(((i1 - i2) / (i1 + i2) - det.visibility).abs() < 1e-12);
        // with OPLL noise the raised contrast averages back to the visibility
        let j = Interferometer::new(&ch, &det, 7.53e-3).unwrap();
        assert!((j.contrast * (-7.53e-3f64 / 2.0).exp() - det.visibility).abs() < 1e-12);
    }

    #[test]
    fn double_clicks_discarded() {
        let i = ideal();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut doubles = 0;
        for g in 0..2000 {
            let e = i.detect(g, pulse(0.0, 5.0), pulse(PI / 2.0, 5.0), 0.0, &mut rng);
            if e.double_click {
                doubles += 1;
                assert_eq!(e.detector, Detector::None);
            }
        }
        assert!(doubles > 1000);
    }
}

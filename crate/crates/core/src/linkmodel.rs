//! Closed-form expected gains and QBER of the twin-field link.
//!
//! Gains are the probability per encoding gate that D1 registers a click and
//! D2 does not (only single clicks are announced). Both outputs of Charlie's
//! beam splitter see the classical-field intensity
//! `I(θ) = η_C (μ_a η_a + μ_b η_b ± 2 V √(μ_a η_a μ_b η_b) cos θ) / 2`
//! with Poissonian detection `1 - (1 - p_dc) e^{-I}`. Phase-randomised gains
//! average over θ by quadrature.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::params::{ChannelParams, DetectorParams, IntensityLabel, ProtocolConfig, User};

/// Quadrature nodes used for phase averaging.
pub const PHASE_NODES: usize = 256;

/// Misalignment coefficient that reproduces the 2.65 % QBER measured at 90.8 dB
/// with the default detector and feedback parameters (see
/// [`fit_misalignment_coefficient`]).
pub const DEFAULT_MISALIGNMENT_COEFFICIENT: f64 = 0.383_415_675_091_191;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArmMode {
    SingleArmA,
    SingleArmB,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    pub drift_rate_rad_per_s: f64,
    pub correction_interval_s: f64,
    /// Fraction of all gates used as unmodulated reference pulses.
    pub reference_duty: f64,
    pub misalignment_coefficient: f64,
    pub opll_phase_variance_rad2: f64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl Default for FeedbackParams {
    fn default() -> Self {
        Self {
            drift_rate_rad_per_s: 0.7,
            correction_interval_s: 0.1,
            reference_duty: 0.5,
            misalignment_coefficient: DEFAULT_MISALIGNMENT_COEFFICIENT,
            opll_phase_variance_rad2: 7.53e-3,
            enabled: true,
        }
    }
}

impl FeedbackParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.reference_duty > 0.0 && self.reference_duty < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "reference duty {} must lie strictly between 0 and 1",
                self.reference_duty
            )));
        }
        let all = [
            self.drift_rate_rad_per_s,
            self.correction_interval_s,
            self.misalignment_coefficient,
            self.opll_phase_variance_rad2,
        ];
        if all.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidParameter("feedback parameters must be non-negative".into()));
        }
        if self.correction_interval_s == 0.0 {
            return Err(Error::InvalidParameter("correction interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberBreakdown {
    pub optical: f64,
    pub dark: f64,
    pub feedback: f64,
    pub total: f64,
}

fn arm_fluxes(mu_a: f64, mu_b: f64, channel: &ChannelParams, mode: ArmMode) -> Result<(f64, f64)> {
    if !(mu_a >= 0.0 && mu_b >= 0.0) {
        return Err(Error::InvalidParameter("mean photon numbers must be non-negative".into()));
    }
    let (eta_a, eta_b) = channel.arm_transmittances()?;
    let (fa, fb) = (mu_a * eta_a, mu_b * eta_b);
    Ok(match mode {
        ArmMode::Double => (fa, fb),
        ArmMode::SingleArmA => (fa, 0.0),
        ArmMode::SingleArmB => (0.0, fb),
    })
}

/// Single-click D1 probability for fixed relative phase `theta`.
fn d1_single_click(fa: f64, fb: f64, theta: f64, channel: &ChannelParams, det: &DetectorParams) -> f64 {
    let p_dc = det.dark_probability();
    let mean = channel.charlie_efficiency * (fa + fb) / 2.0;
    let fringe = channel.charlie_efficiency * det.visibility * (fa * fb).sqrt() * theta.cos();
    let no_click_1 = (1.0 - p_dc) * (-(mean + fringe)).exp();
    let no_click_2 = (1.0 - p_dc) * (-(mean - fringe)).exp();
    (1.0 - no_click_1) * no_click_2
}

/// Expected announced D1 gain for a fixed relative phase between the two fields.
pub fn gain_at_phase(
    mu_a: f64,
    mu_b: f64,
    theta: f64,
    channel: &ChannelParams,
    det: &DetectorParams,
) -> Result<f64> {
    let (fa, fb) = arm_fluxes(mu_a, mu_b, channel, ArmMode::Double)?;
    Ok(d1_single_click(fa, fb, theta, channel, det))
}

/// Expected phase-randomised D1 gain per encoding gate.
pub fn expected_gain(
    mu_a: f64,
    mu_b: f64,
    channel: &ChannelParams,
    det: &DetectorParams,
    mode: ArmMode,
) -> Result<f64> {
    let (fa, fb) = arm_fluxes(mu_a, mu_b, channel, mode)?;
    let step = 2.0 * PI / PHASE_NODES as f64;
    let sum: f64 = (0..PHASE_NODES)
        .map(|k| d1_single_click(fa, fb, k as f64 * step, channel, det))
        .sum();
    Ok(sum / PHASE_NODES as f64)
}

/// Reference-pulse counts at D3 per correction window, `(C0, C1)`.
///
/// D3 watches the destructive port of the reference interference, so the
/// count floor `C0` at zero offset comes from the imperfect visibility and
/// dark counts, and `C0 + C1` is reached at the quadrature lock point.
pub fn d3_window_counts(
    mu_total: f64,
    channel: &ChannelParams,
    det: &DetectorParams,
    fb: &FeedbackParams,
) -> Result<(f64, f64)> {
    let (fa, fb_flux) = arm_fluxes(mu_total / 2.0, mu_total / 2.0, channel, ArmMode::Double)?;
    let no_dark = 1.0 - det.dark_probability();
    let mean = channel.charlie_efficiency * (fa + fb_flux) / 2.0;
    let fringe = channel.charlie_efficiency * det.visibility * (fa * fb_flux).sqrt();
    let p_floor = 1.0 - no_dark * (-(mean - fringe)).exp();
    let p_lock = 1.0 - no_dark * (-mean).exp();
    let pulses = det.clock_rate_hz * fb.reference_duty / (1.0 - fb.reference_duty) * fb.correction_interval_s;
    Ok((pulses * p_floor, pulses * (p_lock - p_floor)))
}

/// Counts registered by D3 at phase offset `phase_offset`: `C0 + C1 (1 - cos Δϑ)`.
pub fn d3_counts(phase_offset: f64, c0: f64, c1: f64) -> f64 {
    c0 + c1 * (1.0 - phase_offset.cos())
}

/// Shot-noise limited phase estimation error `2/√C`.
pub fn feedback_phase_error(counts: f64) -> Result<f64> {
    if !(counts > 0.0) {
        return Err(Error::Domain {
            what: "feedback counts",
            value: counts,
        });
    }
    Ok(2.0 / counts.sqrt())
}

/// QBER of the encoded signal pulses with total mean photon number `mu`.
pub fn expected_qber(
    mu: f64,
    channel: &ChannelParams,
    det: &DetectorParams,
    fb: &FeedbackParams,
) -> Result<QberBreakdown> {
    let p_dc = det.dark_probability();
    let gain = expected_gain(mu / 2.0, mu / 2.0, channel, det, ArmMode::Double)?;
    let signal = (gain - p_dc).max(0.0);
    let optical = (1.0 - det.visibility) / 2.0 + det.modulation_error;
    let dark = if signal + p_dc > 0.0 {
        p_dc / (2.0 * (signal + p_dc))
    } else {
        0.5
    };
    let (c0, c1) = d3_window_counts(mu, channel, det, fb)?;
    let lock_counts = d3_counts(PI / 2.0, c0, c1);
    let feedback = match feedback_phase_error(lock_counts) {
        Ok(err) => {
            let misalignment = fb.misalignment_coefficient * err;
            (misalignment / 2.0).sin().powi(2)
        }
        // no reference counts: the phase is unlocked and the fringe is random
        Err(_) => 0.5,
    };
    let total = (optical + dark + feedback).min(0.5);
    Ok(QberBreakdown {
        optical,
        dark,
        feedback,
        total,
    })
}

/// Finds the misalignment coefficient for which `expected_qber` at
/// `channel` equals `target_qber`, by bisection.
pub fn fit_misalignment_coefficient(
    target_qber: f64,
    mu: f64,
    channel: &ChannelParams,
    det: &DetectorParams,
    fb: &FeedbackParams,
) -> Result<f64> {
    let eval = |k: f64| -> Result<f64> {
        let f = FeedbackParams {
            misalignment_coefficient: k,
            ..*fb
        };
        Ok(expected_qber(mu, channel, det, &f)?.total - target_qber)
    };
    let (mut lo, mut hi) = (0.0, 50.0);
    if eval(lo)? > 0.0 || eval(hi)? < 0.0 {
        return Err(Error::EstimationFailure(format!(
            "target QBER {target_qber} is not reachable by the feedback term"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Charlie-station efficiency for which the double-path gain at per-user
/// intensities `mu_a`, `mu_b` equals `target_gain`, by bisection.
pub fn fit_charlie_efficiency(
    target_gain: f64,
    mu_a: f64,
    mu_b: f64,
    channel: &ChannelParams,
    det: &DetectorParams,
) -> Result<f64> {
    let eval = |eff: f64| -> Result<f64> {
        Ok(expected_gain(mu_a, mu_b, &channel.with_charlie_efficiency(eff)?, det, ArmMode::Double)? - target_gain)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    if eval(lo)? > 0.0 || eval(hi)? < 0.0 {
        return Err(Error::EstimationFailure(format!(
            "gain {target_gain} is not reachable with any Charlie efficiency"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expected gains and QBERs at one loss point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPoint {
    pub loss_db: f64,
    /// Phase-randomised gains for every (Alice, Bob) intensity pair.
    pub gains: Vec<((IntensityLabel, IntensityLabel), f64)>,
    pub single_arm_gains: Vec<((User, IntensityLabel), f64)>,
    pub vacuum_gain: f64,
    /// Gain of phase-encoded signal pulses (relative phase 0 or π).
    pub encoded_gain: f64,
    pub qber_signal: QberBreakdown,
    pub qber_decoy: QberBreakdown,
}

impl LinkPoint {
    pub fn gain(&self, a: IntensityLabel, b: IntensityLabel) -> f64 {
        self.gains
            .iter()
            .find(|(k, _)| *k == (a, b))
            .map(|(_, g)| *g)
            .expect("all nine intensity pairs are evaluated")
    }

    pub fn single_arm(&self, user: User, label: IntensityLabel) -> f64 {
        self.single_arm_gains
            .iter()
            .find(|(k, _)| *k == (user, label))
            .map(|(_, g)| *g)
            .expect("single-arm gains are evaluated for every label")
    }
}

/// Evaluates one link point for the intensities of `cfg`.
pub fn evaluate_point(
    cfg: &ProtocolConfig,
    channel: &ChannelParams,
    det: &DetectorParams,
    fb: &FeedbackParams,
) -> Result<LinkPoint> {
    let mu = cfg.intensities;
    let mut gains = Vec::with_capacity(9);
    for a in IntensityLabel::ALL {
        for b in IntensityLabel::ALL {
            gains.push(((a, b), expected_gain(mu.get(a), mu.get(b), channel, det, ArmMode::Double)?));
        }
    }
    let mut single_arm_gains = Vec::with_capacity(6);
    for label in IntensityLabel::ALL {
        let m = mu.get(label);
        single_arm_gains.push(((User::Alice, label), expected_gain(m, 0.0, channel, det, ArmMode::SingleArmA)?));
        single_arm_gains.push(((User::Bob, label), expected_gain(0.0, m, channel, det, ArmMode::SingleArmB)?));
    }
    let vacuum_gain = expected_gain(0.0, 0.0, channel, det, ArmMode::Double)?;
    let encoded_gain = 0.5
        * (gain_at_phase(mu.u, mu.u, 0.0, channel, det)? + gain_at_phase(mu.u, mu.u, PI, channel, det)?);
    Ok(LinkPoint {
        loss_db: channel.total_loss_db,
        gains,
        single_arm_gains,
        vacuum_gain,
        encoded_gain,
        qber_signal: expected_qber(2.0 * mu.u, channel, det, fb)?,
        qber_decoy: expected_qber(2.0 * mu.v, channel, det, fb)?,
    })
}

/// Evaluates the link model over an increasing grid of total losses.
pub fn sweep_loss(
    cfg: &ProtocolConfig,
    grid_db: &[f64],
    base: &ChannelParams,
    det: &DetectorParams,
    fb: &FeedbackParams,
) -> Result<Vec<LinkPoint>> {
    if grid_db.is_empty() {
        return Err(Error::InvalidParameter("loss grid is empty".into()));
    }
    if grid_db.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("loss grid must be strictly increasing".into()));
    }
    cfg.validate()?;
    det.validate()?;
    fb.validate()?;
    grid_db
        .iter()
        .map(|&l| evaluate_point(cfg, &base.with_total_loss(l)?, det, fb))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ProtocolVariant;
    use approx::assert_relative_eq;

    fn ch(l: f64) -> ChannelParams {
        ChannelParams::symmetric(l).unwrap()
    }

    #[test]
    fn vacuum_gives_dark_counts() {
        let det = DetectorParams::default();
        let p = det.dark_probability();
        for l in [0.0, 30.0, 90.0] {
            let q = expected_gain(0.0, 0.0, &ch(l), &det, ArmMode::Double).unwrap();
            assert_relative_eq!(q, p, max_relative = 1e-6);
        }
    }

    #[test]
    fn double_path_gain_near_measured() {
        let det = DetectorParams::default();
        let q = expected_gain(0.2, 0.2, &ch(21.5), &det, ArmMode::Double).unwrap();
        assert!((q / 5562.8e-6 - 1.0).abs() < 0.2, "{q}");
    }

    #[test]
    fn single_arm_gain_near_measured() {
        let det = DetectorParams::default();
        let c = ChannelParams::from_arm_losses(10.7, 10.8).unwrap();
        let q = expected_gain(0.2, 0.0, &c, &det, ArmMode::SingleArmA).unwrap();
        assert!((q / 3000.8e-6 - 1.0).abs() < 0.2, "{q}");
        let q_mode = expected_gain(0.2, 0.2, &c, &det, ArmMode::SingleArmA).unwrap();
        assert_relative_eq!(q, q_mode, max_relative = 1e-12);
    }

    #[test]
    fn d3_fringe() {
        assert_eq!(d3_counts(0.0, 100.0, 100.0), 100.0);
        assert_relative_eq!(d3_counts(PI / 2.0, 100.0, 100.0), 200.0, max_relative = 1e-12);
        assert_relative_eq!(d3_counts(PI, 100.0, 100.0), 300.0, max_relative = 1e-12);
        assert_relative_eq!(d3_counts(0.3 + 2.0 * PI, 7.0, 5.0), d3_counts(0.3, 7.0, 5.0), max_relative = 1e-12);
    }

    #[test]
    fn phase_error_anchors() {
        assert_relative_eq!(feedback_phase_error(4.0).unwrap(), 1.0);
        assert_relative_eq!(feedback_phase_error(400.0).unwrap(), 0.1);
        assert!(feedback_phase_error(0.0).is_err());
        assert!(feedback_phase_error(-3.0).is_err());
    }

    #[test]
    fn phase_error_at_high_loss() {
        // at the lock point D3 counts like a phase-randomised detector:
        // (signal + dark) per reference pulse x reference rate x window
        let det = DetectorParams::default();
        let fb = FeedbackParams::default();
        let c = ch(90.8);
        let g = expected_gain(0.2, 0.2, &c, &det, ArmMode::Double).unwrap();
        let counts = g * 1e9 * 0.1;
        let (c0, c1) = d3_window_counts(0.4, &c, &det, &fb).unwrap();
        assert_relative_eq!(c0 + c1, counts, max_relative = 1e-3);
        assert!(c0 < 0.1 * c1);
        let err = feedback_phase_error(counts).unwrap();
        assert!(err > 0.08 && err < 0.15, "{err}");
    }

    #[test]
    fn error_free_limit() {
        let det = DetectorParams::noiseless();
        let fb = FeedbackParams {
            misalignment_coefficient: 0.0,
            ..Default::default()
        };
        let q = expected_qber(0.4, &ch(30.0), &det, &fb).unwrap();
        assert_eq!(q.total, 0.0);
    }

    #[test]
    fn qber_anchors() {
        let det = DetectorParams::default();
        let fb = FeedbackParams::default();
        let q = expected_qber(0.4, &ch(30.5), &det, &fb).unwrap();
        assert!((q.total - 0.0179).abs() < 0.005, "{q:?}");
        let q = expected_qber(0.4, &ch(90.8), &det, &fb).unwrap();
        assert!((q.total - 0.0265).abs() < 0.008, "{q:?}");
        assert!(q.dark > q.optical * 0.2 && q.feedback > 0.0);
        assert_relative_eq!(q.total, q.optical + q.dark + q.feedback, epsilon = 1e-6);
    }

    #[test]
    fn default_coefficient_is_the_fit() {
        let det = DetectorParams::default();
        let fb = FeedbackParams::default();
        let k = fit_misalignment_coefficient(0.0265, 0.4, &ch(90.8), &det, &fb).unwrap();
        assert_relative_eq!(k, DEFAULT_MISALIGNMENT_COEFFICIENT, max_relative = 1e-9);
    }


    #[test]
    fn charlie_efficiency_fit() {
        let det = DetectorParams::default();
        let c = ChannelParams::from_arm_losses(20.4, 20.3).unwrap();
        let eff = fit_charlie_efficiency(592.1e-6, 0.2, 0.2, &c, &det).unwrap();
        let g = expected_gain(0.2, 0.2, &c.with_charlie_efficiency(eff).unwrap(), &det, ArmMode::Double).unwrap();
        assert!((g / 592.1e-6 - 1.0).abs() < 1e-9);
        assert!(fit_charlie_efficiency(0.9, 0.2, 0.2, &c, &det).is_err());
    }
    #[test]
    fn qber_monotone_in_loss() {
        let det = DetectorParams::default();
        let fb = FeedbackParams::default();
        let mut last = 0.0;
        for l in (0..=100).map(|x| x as f64) {
            let t = expected_qber(0.4, &ch(l), &det, &fb).unwrap().total;
            assert!(t + 1e-15 >= last, "{l}");
            last = t;
        }
    }

    #[test]
    fn sweep_monotone_and_slope() {
        let cfg = ProtocolConfig::reference(ProtocolVariant::Original);
        let det = DetectorParams::default();
        let fb = FeedbackParams::default();
        let pts = sweep_loss(&cfg, &[20.0, 40.0, 60.0], &ChannelParams::default(), &det, &fb).unwrap();
        assert_eq!(pts.len(), 3);
        let g: Vec<f64> = pts.iter().map(|p| p.gain(IntensityLabel::U, IntensityLabel::U)).collect();
        assert!(g[0] > g[1] && g[1] > g[2]);
        // two analytic points, dark counts off: log10 gain drops by 1 per 20 dB
        let quiet = det.without_dark_counts();
        let pts = sweep_loss(&cfg, &[20.0, 40.0], &ChannelParams::default(), &quiet, &fb).unwrap();
        let d = pts[1].gain(IntensityLabel::U, IntensityLabel::U).log10()
            - pts[0].gain(IntensityLabel::U, IntensityLabel::U).log10();
        assert!((d + 1.0).abs() < 0.01, "{d}");
    }

    #[test]
    fn sweep_matches_measured_row() {
        let cfg = ProtocolConfig::reference(ProtocolVariant::Original);
        let pts = sweep_loss(
            &cfg,
            &[71.1],
            &ChannelParams::default(),
            &DetectorParams::default(),
            &FeedbackParams::default(),
        )
        .unwrap();
        let q = pts[0].gain(IntensityLabel::U, IntensityLabel::U);
        assert!((q / 18.2e-6 - 1.0).abs() < 0.2, "{q}");
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let cfg = ProtocolConfig::reference(ProtocolVariant::Original);
        let args = (ChannelParams::default(), DetectorParams::default(), FeedbackParams::default());
        assert!(sweep_loss(&cfg, &[], &args.0, &args.1, &args.2).is_err());
        assert!(sweep_loss(&cfg, &[20.0, 10.0], &args.0, &args.1, &args.2).is_err());
    }

    #[test]
    fn loss_doubling_equivalence() {
        let det = DetectorParams::default().without_dark_counts();
        for arm in [10.0, 20.0, 30.0] {
            let single = ChannelParams::from_arm_losses(arm, arm).unwrap();
            let qs = expected_gain(0.2, 0.0, &single, &det, ArmMode::SingleArmA).unwrap();
            let qd = expected_gain(0.2, 0.2, &ch(2.0 * arm), &det, ArmMode::Double).unwrap();
            // double path at total loss 2L' vs one arm at L': double carries 2x flux
            assert!((qd / (2.0 * qs) - 1.0).abs() < 0.05);
        }
    }
}

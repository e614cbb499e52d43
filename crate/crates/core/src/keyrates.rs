//! Secret key rates of the three protocol variants and the repeaterless
//! capacity bounds.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::decoy::{
    e1_upper, phase_error_curty, y0_lower, y1_lower, yield_matrix_upper_bounds, Bounded, DecoyInputs, GainTable,
};
use crate::error::{Error, Result};
use crate::linkmodel::LinkPoint;
use crate::params::{Basis, IntensityLabel, IntensityTriple, ProtocolConfig, ProtocolVariant, User};
use crate::report::{KeyRateReport, RateFlag};
use crate::tallies::MeasurementTallies;
use crate::units::{db_to_transmittance, entropy_unchecked};

/// Detection efficiency assumed by the realistic capacity bound.
pub const REALISTIC_DETECTION_EFFICIENCY: f64 = 0.35;
/// Extra loss of the realistic bound for using a single detector.
pub const REALISTIC_EXTRA_LOSS_DB: f64 = 3.0;

/// Average of `sin²(δ/2)` over a phase slice of width `2π/M`.
pub fn intrinsic_misalignment(m_slices: u32) -> f64 {
    let a = 2.0 * PI / m_slices as f64;
    0.5 * (1.0 - a.sin() / a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub f_ec: f64,
    pub m_slices: u32,
    pub e_m: f64,
    pub epsilon: f64,
    pub clock_rate_hz: f64,
}

impl Default for RateParams {
    fn default() -> Self {
        Self::new(16, 1.15, 0.078, 1e9)
    }
}

impl RateParams {
    pub fn new(m_slices: u32, f_ec: f64, epsilon: f64, clock_rate_hz: f64) -> Self {
        Self {
            f_ec,
            m_slices,
            e_m: intrinsic_misalignment(m_slices),
            epsilon,
            clock_rate_hz,
        }
    }

    pub fn from_config(cfg: &ProtocolConfig, clock_rate_hz: f64) -> Self {
        Self::new(cfg.phase_slices_m, cfg.f_ec, cfg.epsilon, clock_rate_hz)
    }

    pub fn m_prime(&self) -> f64 {
        self.m_slices as f64 / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_slices < 2 || self.m_slices % 2 != 0 {
            return Err(Error::InvalidParameter(format!("M = {} must be even and at least 2", self.m_slices)));
        }
        if !(self.f_ec >= 1.0) {
            return Err(Error::InvalidParameter(format!("f_EC = {} must be at least 1", self.f_ec)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon = {} outside [0, 1]", self.epsilon)));
        }
        if !(self.clock_rate_hz > 0.0) {
            return Err(Error::InvalidParameter("clock rate must be positive".into()));
        }
        if (self.e_m - intrinsic_misalignment(self.m_slices)).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "E_M = {} does not match M = {}",
                self.e_m, self.m_slices
            )));
        }
        Ok(())
    }
}

struct Estimates {
    y0: Bounded,
    y1: Bounded,
    e1: Bounded,
}

fn estimate(d: &DecoyInputs) -> std::result::Result<Estimates, Error> {
    let y0 = y0_lower(d)?;
    let y1 = y1_lower(d)?;
    let e1 = e1_upper(d, y1.value)?;
    Ok(Estimates { y0, y1, e1 })
}

fn attach(r: &mut KeyRateReport, est: &Estimates) {
    r.y0_lower = Some(est.y0.value);
    r.y1_lower = Some(est.y1.value);
    r.e1_upper = Some(est.e1.value);
    for (b, f) in [
        (est.y0, RateFlag::Y0Clamped),
        (est.y1, RateFlag::Y1Clamped),
        (est.e1, RateFlag::E1Clamped),
    ] {
        if b.clamped() {
            r.flag(f);
        }
    }
}

fn failure(variant: ProtocolVariant, e: Error) -> Result<KeyRateReport> {
    match e {
        Error::EstimationFailure(msg) | Error::DegenerateDecoy(msg) => Ok(KeyRateReport::failed(variant, msg)),
        other => Err(other),
    }
}

/// Original protocol. `d.e_u` is used as given; add `p.e_m` beforehand when
/// the QBER does not already contain the slice misalignment.
pub fn skr_original(d: &DecoyInputs, p: &RateParams) -> Result<KeyRateReport> {
    p.validate()?;
    d.validate()?;
    if d.q_u == 0.0 {
        return Ok(KeyRateReport::new(ProtocolVariant::Original, 0.0, p.clock_rate_hz));
    }
    let est = match estimate(d) {
        Ok(e) => e,
        Err(e) => return failure(ProtocolVariant::Original, e),
    };
    let q1 = d.u * (-d.u).exp() * est.y1.value;
    let raw = (q1 * (1.0 - entropy_unchecked(est.e1.value)) - p.f_ec * d.q_u * entropy_unchecked(d.e_u)) / p.m_prime();
    let mut r = KeyRateReport::new(ProtocolVariant::Original, raw, p.clock_rate_hz);
    attach(&mut r, &est);
    Ok(r)
}

/// Gains needed by the send-not-send encoding basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SendNotSendInputs {
    /// Signal intensity of Alice and Bob.
    pub u_a: f64,
    pub u_b: f64,
    /// Both users send.
    pub q_u: f64,
    /// Only Alice sends.
    pub q_ua: f64,
    /// Only Bob sends.
    pub q_ub: f64,
    /// Neither sends.
    pub q_0: f64,
}

impl SendNotSendInputs {
    pub fn from_tallies(t: &MeasurementTallies, per_user: &IntensityTriple) -> Result<Self> {
        let missing = |what: &str| Error::MissingInput(format!("send-not-send needs {what}"));
        Ok(Self {
            u_a: per_user.u,
            u_b: per_user.u,
            q_u: t
                .gain(IntensityLabel::U, IntensityLabel::U, Basis::X)
                .ok_or_else(|| missing("Q_uu"))?,
            q_ua: t.single_arm_gain(User::Alice, IntensityLabel::U).ok_or_else(|| missing("Q_ua"))?,
            q_ub: t.single_arm_gain(User::Bob, IntensityLabel::U).ok_or_else(|| missing("Q_ub"))?,
            q_0: t.vacuum_gain().ok_or_else(|| missing("the vacuum gain Q_0"))?,
        })
    }

    /// `(Q^z, E^z)` of the encoding basis for send probability `epsilon`.
    pub fn z_basis(&self, epsilon: f64) -> (f64, f64) {
        let e = epsilon;
        let both = e * e * self.q_u;
        let none = (1.0 - e) * (1.0 - e) * self.q_0;
        let qz = both + e * (1.0 - e) * (self.q_ua + self.q_ub) + none;
        let ez = if qz > 0.0 { (both + none) / qz } else { 0.0 };
        (qz, ez)
    }
}

pub fn skr_send_not_send(s: &SendNotSendInputs, d: &DecoyInputs, p: &RateParams) -> Result<KeyRateReport> {
    p.validate()?;
    d.validate()?;
    let variant = ProtocolVariant::SendNotSend;
    let est = match estimate(d) {
        Ok(e) => e,
        Err(e) => return failure(variant, e),
    };
    let eps = p.epsilon;
    if eps == 0.0 || eps == 1.0 {
        let mut r = KeyRateReport::failed(variant, format!("send probability {eps} leaves the encoding basis deterministic"));
        attach(&mut r, &est);
        return Ok(r);
    }
    let (qz, ez) = s.z_basis(eps);
    let (ua, ub) = (s.u_a, s.u_b);
    let u = ua + ub;
    let q1 = (eps * (1.0 - eps) * (ua * (-ua).exp() + ub * (-ub).exp()) + eps * eps * u * (-u).exp()) * est.y1.value;
    let q0 = ((1.0 - eps).powi(2) + eps * (1.0 - eps) * ((-ua).exp() + (-ub).exp()) + eps * eps * (-u).exp())
        * est.y0.value;
    let raw = q0 + q1 * (1.0 - entropy_unchecked(est.e1.value)) - p.f_ec * qz * entropy_unchecked(ez.min(1.0));
    let mut r = KeyRateReport::new(variant, raw, p.clock_rate_hz);
    attach(&mut r, &est);
    Ok(r)
}

pub fn skr_curty(q_z: f64, e_z: f64, e1x: Bounded, p: &RateParams) -> Result<KeyRateReport> {
    p.validate()?;
    if !(0.0..=1.0).contains(&q_z) || !(0.0..=1.0).contains(&e_z) {
        return Err(Error::InvalidParameter(format!("Q^z = {q_z}, E^z = {e_z} must lie in [0, 1]")));
    }
    let raw = q_z * (1.0 - entropy_unchecked(e1x.value)) - p.f_ec * q_z * entropy_unchecked(e_z);
    let mut r = KeyRateReport::new(ProtocolVariant::Curty, raw, p.clock_rate_hz);
    r.e1x_upper = Some(e1x.value);
    if e1x.clamped() {
        r.flag(RateFlag::E1xClamped);
    }
    Ok(r)
}

/// Curty rate from the phase-randomised gain table: yield LP, phase-error
/// bound and rate. `per_user` holds one user's intensities.
pub fn skr_curty_from_gains(
    gains: &GainTable,
    per_user: &IntensityTriple,
    q_z: f64,
    e_z: f64,
    n_cut: u32,
    y_cut: u32,
    p: &RateParams,
) -> Result<KeyRateReport> {
    let bounds = yield_matrix_upper_bounds(gains, per_user, n_cut, y_cut)?;
    let e1x = match phase_error_curty(&bounds, per_user.u, q_z) {
        Ok(e) => e,
        Err(e) => return failure(ProtocolVariant::Curty, e),
    };
    skr_curty(q_z, e_z, e1x, p)
}

pub fn skc0_ideal(total_loss_db: f64, clock_rate_hz: f64) -> Result<f64> {
    let eta = db_to_transmittance(total_loss_db)?;
    Ok(-(1.0 - eta).log2() * clock_rate_hz)
}

pub fn skc0_realistic(total_loss_db: f64, clock_rate_hz: f64, det_efficiency: f64, extra_loss_db: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&det_efficiency) {
        return Err(Error::InvalidParameter(format!("detection efficiency {det_efficiency} outside [0, 1]")));
    }
    let eta = db_to_transmittance(total_loss_db)? * det_efficiency * db_to_transmittance(extra_loss_db)?;
    Ok(-(1.0 - eta).log2() * clock_rate_hz)
}

impl KeyRateReport {
    /// Fills the capacity columns for `loss_db`.
    pub fn at_loss(mut self, loss_db: f64, clock_rate_hz: f64) -> Result<Self> {
        let ideal = skc0_ideal(loss_db, clock_rate_hz)?;
        self.loss_db = Some(loss_db);
        self.skc0_ideal_bps = Some(ideal);
        self.skc0_realistic_bps = Some(skc0_realistic(
            loss_db,
            clock_rate_hz,
            REALISTIC_DETECTION_EFFICIENCY,
            REALISTIC_EXTRA_LOSS_DB,
        )?);
        self.supremacy_ratio = Some(if ideal > 0.0 { self.skr_bits_per_second / ideal } else { 0.0 });
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupremacyRow {
    pub variant: ProtocolVariant,
    pub loss_db: f64,
    pub skr_bits_per_second: f64,
    pub skc0_ideal_bps: f64,
    pub skc0_realistic_bps: f64,
    pub ratio_ideal: f64,
    pub ratio_realistic: f64,
    pub beats_ideal: bool,
    pub beats_realistic: bool,
}

/// Compares every report with both capacity bounds at its loss.
pub fn supremacy_report(reports: &[KeyRateReport], clock_rate_hz: f64) -> Result<Vec<SupremacyRow>> {
    reports
        .iter()
        .map(|r| {
            let loss = r
                .loss_db
                .ok_or_else(|| Error::MissingInput(format!("{} report has no loss", r.variant)))?;
            let ideal = skc0_ideal(loss, clock_rate_hz)?;
            let realistic =
                skc0_realistic(loss, clock_rate_hz, REALISTIC_DETECTION_EFFICIENCY, REALISTIC_EXTRA_LOSS_DB)?;
            let skr = r.skr_bits_per_second;
            Ok(SupremacyRow {
                variant: r.variant,
                loss_db: loss,
                skr_bits_per_second: skr,
                skc0_ideal_bps: ideal,
                skc0_realistic_bps: realistic,
                ratio_ideal: skr / ideal,
                ratio_realistic: skr / realistic,
                beats_ideal: skr > 0.0 && skr > ideal,
                beats_realistic: skr > 0.0 && skr > realistic,
            })
        })
        .collect()
}

/// Decoy inputs from measured tallies. `per_user` intensities are summed
/// over both users. `Q_w` is the vacuum gain when `vacuum_for_w` is set,
/// otherwise the measured w-w gain; `E_w` defaults to 1/2 when not measured.
pub fn decoy_inputs_from_tallies(
    t: &MeasurementTallies,
    per_user: &IntensityTriple,
    vacuum_for_w: bool,
) -> Result<DecoyInputs> {
    use IntensityLabel::*;
    let tot = per_user.totals();
    let need = |a: IntensityLabel| {
        t.gain(a, a, Basis::X)
            .ok_or_else(|| Error::MissingInput(format!("gain Q_{0}{0} is required", a.as_char())))
    };
    let q_w = if vacuum_for_w {
        t.vacuum_gain()
            .ok_or_else(|| Error::MissingInput("vacuum gain Q_0 is required".into()))?
    } else {
        need(W)?
    };
    let qber = |a: IntensityLabel| {
        t.qber(a, a, Basis::X)
            .ok_or_else(|| Error::MissingInput(format!("QBER E_{} is required", a.as_char())))
    };
    Ok(DecoyInputs {
        u: tot.u,
        v: tot.v,
        w: tot.w,
        q_u: need(U)?,
        q_v: need(V)?,
        q_w,
        e_u: qber(U)?,
        e_v: qber(V)?,
        e_w: t.qber(W, W, Basis::X).unwrap_or(0.5),
    })
}

/// Decoy inputs from the link model, with the slice misalignment added to
/// `E_u` (the model QBER does not contain it).
pub fn decoy_inputs_from_model(point: &LinkPoint, per_user: &IntensityTriple, e_m: f64) -> DecoyInputs {
    use IntensityLabel::*;
    let tot = per_user.totals();
    DecoyInputs {
        u: tot.u,
        v: tot.v,
        w: tot.w,
        q_u: point.gain(U, U),
        q_v: point.gain(V, V),
        q_w: point.gain(W, W),
        e_u: (point.qber_signal.total + e_m).min(0.5),
        e_v: point.qber_decoy.total,
        e_w: 0.5,
    }
}

/// Key rate predicted by the link model at one loss point.
pub fn model_report(point: &LinkPoint, cfg: &ProtocolConfig, clock_rate_hz: f64) -> Result<KeyRateReport> {
    use IntensityLabel::*;
    let p = RateParams::from_config(cfg, clock_rate_hz);
    let mu = &cfg.intensities;
    let r = match cfg.variant {
        ProtocolVariant::Original => skr_original(&decoy_inputs_from_model(point, mu, p.e_m), &p)?,
        ProtocolVariant::SendNotSend => {
            // no slice misalignment in the test basis
            let d = decoy_inputs_from_model(point, mu, 0.0);
            let s = SendNotSendInputs {
                u_a: mu.u,
                u_b: mu.u,
                q_u: point.gain(U, U),
                q_ua: point.single_arm(User::Alice, U),
                q_ub: point.single_arm(User::Bob, U),
                q_0: point.vacuum_gain,
            };
            skr_send_not_send(&s, &d, &p)?
        }
        ProtocolVariant::Curty => {
            let gains: GainTable = point
                .gains
                .iter()
                .filter(|((a, b), _)| a <= b)
                .map(|(k, g)| (*k, *g))
                .collect();
            skr_curty_from_gains(
                &gains,
                mu,
                point.encoded_gain,
                point.qber_signal.total,
                cfg.n_cut,
                cfg.y_cut,
                &p,
            )?
        }
    };
    r.at_loss(point.loss_db, clock_rate_hz)
}

/// Key rate from measured tallies.
///
/// For the Curty variant the X-basis gains of (a, b) and (b, a) are averaged
/// and the Z-basis (u, u) gain and QBER are the signal inputs. `measured_w`
/// selects the measured w-w gain over the vacuum gain for `Q_w`.
pub fn report_from_tallies(
    t: &MeasurementTallies,
    cfg: &ProtocolConfig,
    clock_rate_hz: f64,
    measured_w: bool,
) -> Result<KeyRateReport> {
    use IntensityLabel::*;
    let p = RateParams::from_config(cfg, clock_rate_hz);
    let mu = &cfg.intensities;
    match cfg.variant {
        ProtocolVariant::Original => skr_original(&decoy_inputs_from_tallies(t, mu, !measured_w)?, &p),
        ProtocolVariant::SendNotSend => {
            let d = decoy_inputs_from_tallies(t, mu, !measured_w)?;
            skr_send_not_send(&SendNotSendInputs::from_tallies(t, mu)?, &d, &p)
        }
        ProtocolVariant::Curty => {
            let mut gains = GainTable::new();
            for (i, a) in IntensityLabel::ALL.into_iter().enumerate() {
                for b in IntensityLabel::ALL.into_iter().skip(i) {
                    let g: Vec<f64> = [t.gain(a, b, Basis::X), t.gain(b, a, Basis::X)].into_iter().flatten().collect();
                    if !g.is_empty() {
                        gains.insert((a, b), g.iter().sum::<f64>() / g.len() as f64);
                    }
                }
            }
            let q_z = t
                .gain(U, U, Basis::Z)
                .ok_or_else(|| Error::MissingInput("encoding-basis gain Q_uu is required".into()))?;
            let e_z = t
                .qber(U, U, Basis::Z)
                .ok_or_else(|| Error::MissingInput("encoding-basis QBER E_uu is required".into()))?;
            skr_curty_from_gains(&gains, mu, q_z, e_z, cfg.n_cut, cfg.y_cut, &p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn tallies_route_matches_direct_inputs() {
        let row = &crate::data::bundled_attenuation_rows().unwrap()[5];
        let cfg = ProtocolConfig::reference(ProtocolVariant::Original);
        let t = row.to_tallies().unwrap();
        let a = report_from_tallies(&t, &cfg, 1e9, false).unwrap();
        let p = RateParams::from_config(&cfg, 1e9);
        let b = skr_original(&decoy_inputs_from_tallies(&t, &cfg.intensities, true).unwrap(), &p).unwrap();
        assert_eq!(a.skr_bits_per_gate, b.skr_bits_per_gate);

        let combo = &crate::data::bundled_combo_rows().unwrap()[0];
        let curty = ProtocolConfig::reference(ProtocolVariant::Curty);
        let r = report_from_tallies(&combo.to_tallies().unwrap(), &curty, 1e9, false).unwrap();
        assert!(r.skr_bits_per_second > 0.0);
        let missing = report_from_tallies(&t, &curty, 1e9, false);
        assert!(matches!(missing, Err(Error::MissingInput(_))), "{missing:?}");
    }

    fn row_71() -> DecoyInputs {
        DecoyInputs {
            u: 0.4,
            v: 0.16,
            w: 1e-5,
            q_u: 18.2e-6,
            q_v: 7.19e-6,
            q_w: 25.9e-9,
            e_u: 0.0205,
            e_v: 0.0197,
            e_w: 0.5,
        }
    }

    #[test]
    fn misalignment_for_sixteen_slices() {
        assert_relative_eq!(intrinsic_misalignment(16), 0.012_752_320_797_783_7, max_relative = 1e-12);
        // midpoint-rule integral of sin^2(d/2) over one slice
        let a = 2.0 * PI / 16.0;
        let n = 100_000;
        let avg: f64 = (0..n)
            .map(|i| ((i as f64 + 0.5) / n as f64 * a / 2.0).sin().powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((avg - intrinsic_misalignment(16)).abs() < 5e-7);
        assert_eq!(format!("{:.3}", avg * 100.0), "1.275");
    }

    #[test]
    fn rate_params_defaults() {
        let p = RateParams::default();
        assert_eq!(p.m_prime(), 8.0);
        p.validate().unwrap();
        let bad = RateParams { e_m: 0.02, ..p };
        assert!(bad.validate().is_err());
        assert!(RateParams::new(15, 1.15, 0.1, 1e9).validate().is_err());
    }

    #[test]
    fn original_zero_gain() {
        let d = DecoyInputs { q_u: 0.0, ..row_71() };
        let r = skr_original(&d, &RateParams::default()).unwrap();
        assert_eq!(r.skr_bits_per_second, 0.0);
    }

    #[test]
    fn original_row_71() {
        // y1 = 4.2416e-5, e1 = 2.2586e-2 (closed forms); rate evaluated by hand
        let r = skr_original(&row_71(), &RateParams::default()).unwrap();
        let y1 = 4.241_597_364_310_51e-5;
        let e1: f64 = 2.258_569_083_395_79e-2;
        let h = |x: f64| -x * x.log2() - (1.0 - x) * (1.0 - x).log2();
        let expect = (0.4 * (-0.4f64).exp() * y1 * (1.0 - h(e1)) - 1.15 * 18.2e-6 * h(0.0205)) / 8.0 * 1e9;
        assert_relative_eq!(r.skr_bits_per_second, expect, max_relative = 1e-9);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn never_send_is_zero() {
        let s = SendNotSendInputs {
            u_a: 0.2,
            u_b: 0.2,
            q_u: 18.2e-6,
            q_ua: 9e-6,
            q_ub: 9e-6,
            q_0: 25.9e-9,
        };
        let (qz, ez) = s.z_basis(0.0);
        assert_eq!(qz, 25.9e-9);
        assert_eq!(ez, 1.0);
        let p = RateParams {
            epsilon: 0.0,
            ..RateParams::default()
        };
        let r = skr_send_not_send(&s, &row_71(), &p).unwrap();
        assert_eq!(r.skr_bits_per_second, 0.0);
        assert!(r.has_flag(RateFlag::EstimationFailed));
    }

    #[test]
    fn curty_half_error() {
        let e1x = Bounded { value: 0.5, raw: 0.7 };
        let r = skr_curty(1.79e-6, 0.0265, e1x, &RateParams::default()).unwrap();
        assert_eq!(r.skr_bits_per_second, 0.0);
        assert!(r.has_flag(RateFlag::E1xClamped) && r.has_flag(RateFlag::NegativeRate));
    }

    #[test]
    fn skc0_values() {
        assert_relative_eq!(skc0_ideal(10.0 * 2f64.log10(), 1.0).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(skc0_ideal(71.1, 1e9).unwrap(), 111.99, max_relative = 1e-3);
        let r0 = skc0_realistic(0.0, 1.0, 0.35, 3.0).unwrap();
        assert_relative_eq!(r0, -(1.0 - 0.35 * 10f64.powf(-0.3)).log2(), max_relative = 1e-12);
        for l in [0.5, 10.0, 50.0, 90.0] {
            assert!(skc0_realistic(l, 1e9, 0.35, 3.0).unwrap() < skc0_ideal(l, 1e9).unwrap());
        }
        assert!(skc0_ideal(-1.0, 1e9).is_err());
    }

    #[test]
    fn estimation_failure_is_zero_rate() {
        let d = DecoyInputs {
            q_u: 1e-3,
            q_v: 0.0,
            q_w: 0.0,
            ..row_71()
        };
        let r = skr_original(&d, &RateParams::default()).unwrap();
        assert_eq!(r.skr_bits_per_gate, 0.0);
        assert!(r.has_flag(RateFlag::EstimationFailed) || r.has_flag(RateFlag::NegativeRate));
    }

    #[test]
    fn supremacy_flags() {
        let mut r = KeyRateReport::new(ProtocolVariant::Original, 45e-9, 1e9);
        r = r.at_loss(90.8, 1e9).unwrap();
        let rows = supremacy_report(&[r.clone()], 1e9).unwrap();
        assert!(rows[0].beats_ideal);
        let zero = KeyRateReport::new(ProtocolVariant::Original, -1.0, 1e9).at_loss(90.8, 1e9).unwrap();
        let rows = supremacy_report(&[zero], 1e9).unwrap();
        assert!(!rows[0].beats_ideal && !rows[0].beats_realistic);
        let no_loss = KeyRateReport::new(ProtocolVariant::Original, 1e-9, 1e9);
        assert!(supremacy_report(&[no_loss], 1e9).is_err());
    }

    proptest! {
        #[test]
        fn skc0_monotone(l1 in 0.0f64..120.0, l2 in 0.0f64..30.0) {
            prop_assert!(skc0_ideal(l1 + l2, 1e9).unwrap() <= skc0_ideal(l1, 1e9).unwrap());
        }

        #[test]
        fn rates_monotone_in_errors(de in 0.0f64..0.05, de1 in 0.0f64..0.2) {
            let p = RateParams::default();
            let d = row_71();
            let a = skr_original(&d, &p).unwrap().raw_bits_per_gate;
            let b = skr_original(&DecoyInputs { e_u: d.e_u + de, ..d }, &p).unwrap().raw_bits_per_gate;
            prop_assert!(b <= a + 1e-18);
            let c = skr_original(&DecoyInputs { e_v: d.e_v + de, ..d }, &p).unwrap().raw_bits_per_gate;
            prop_assert!(c <= a + 1e-18);
            let s = SendNotSendInputs { u_a: 0.2, u_b: 0.2, q_u: 18.2e-6, q_ua: 9.1e-6, q_ub: 9.0e-6, q_0: 25.9e-9 };
            let x = skr_send_not_send(&s, &d, &p).unwrap().raw_bits_per_gate;
            let y = skr_send_not_send(&s, &DecoyInputs { e_v: d.e_v + de, ..d }, &p).unwrap().raw_bits_per_gate;
            prop_assert!(y <= x + 1e-18);
            let e1 = 0.1;
            let lo = skr_curty(1.79e-6, 0.0265, Bounded { value: e1, raw: e1 }, &p).unwrap().raw_bits_per_gate;
            let e2 = (e1 + de1).min(0.5);
            let hi = skr_curty(1.79e-6, 0.0265, Bounded { value: e2, raw: e2 }, &p).unwrap().raw_bits_per_gate;
            prop_assert!(hi <= lo + 1e-18);
            let ez = skr_curty(1.79e-6, 0.0265 + de, Bounded { value: e1, raw: e1 }, &p).unwrap().raw_bits_per_gate;
            prop_assert!(ez <= lo + 1e-18);
        }

        #[test]
        fn per_gate_rate_bounded(q in 0.0f64..1.0, e in 0.0f64..0.5, x in 0.0f64..0.5) {
            let r = skr_curty(q, e, Bounded { value: x, raw: x }, &RateParams::default()).unwrap();
            prop_assert!(r.skr_bits_per_gate <= 1.0 && r.skr_bits_per_gate >= 0.0);
        }
    }
}

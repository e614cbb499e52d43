use serde::{Deserialize, Serialize};

use super::Bounded;
use crate::error::{Error, Result};

/// Gains and QBERs of the three intensity settings, with total mean photon
/// numbers `μ = μ_a + μ_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyInputs {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub q_u: f64,
    pub q_v: f64,
    pub q_w: f64,
    pub e_u: f64,
    pub e_v: f64,
    pub e_w: f64,
}

impl DecoyInputs {
    pub fn validate(&self) -> Result<()> {
        for (what, x) in [("u", self.u), ("v", self.v), ("w", self.w)] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::InvalidParameter(format!("intensity {what}={x} must be non-negative")));
            }
        }
        for (what, x) in [
            ("Q_u", self.q_u),
            ("Q_v", self.q_v),
            ("Q_w", self.q_w),
            ("E_u", self.e_u),
            ("E_v", self.e_v),
            ("E_w", self.e_w),
        ] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidParameter(format!("{what}={x} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

pub fn y0_lower(d: &DecoyInputs) -> Result<Bounded> {
    d.validate()?;
    if d.v == d.w {
        return Err(Error::DegenerateDecoy(format!("v = w = {}", d.v)));
    }
    let raw = (d.v * d.q_w * d.w.exp() - d.w * d.q_v * d.v.exp()) / (d.v - d.w);
    Ok(Bounded::clamp(raw, 0.0, 1.0))
}

pub fn y1_lower(d: &DecoyInputs) -> Result<Bounded> {
    let y0 = y0_lower(d)?.value;
    let (u, v, w) = (d.u, d.v, d.w);
    let den = u * (u * v - u * w - v * v + w * w);
    if den == 0.0 {
        return Err(Error::DegenerateDecoy(format!(
            "u(uv - uw - v^2 + w^2) vanishes for u={u}, v={v}, w={w}"
        )));
    }
    let num = u * u * d.q_v * v.exp() - u * u * d.q_w * w.exp() - (v * v - w * w) * (d.q_u * u.exp() - y0);
    Ok(Bounded::clamp(num / den, 0.0, 1.0))
}

pub fn e1_upper(d: &DecoyInputs, y1_lower: f64) -> Result<Bounded> {
    d.validate()?;
    if d.v == d.w {
        return Err(Error::DegenerateDecoy(format!("v = w = {}", d.v)));
    }
    if !(y1_lower > 0.0) {
        return Err(Error::EstimationFailure(format!(
            "single-photon yield bound {y1_lower} is not positive"
        )));
    }
    let raw = (d.e_v * d.q_v * d.v.exp() - d.e_w * d.q_w * d.w.exp()) / ((d.v - d.w) * y1_lower);
    Ok(Bounded::clamp(raw, 0.0, 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

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
    fn y0_with_vacuum_decoy() {
        let d = DecoyInputs { w: 0.0, q_w: 3e-8, ..row_71() };
        assert_relative_eq!(y0_lower(&d).unwrap().value, 3e-8, max_relative = 1e-12);
    }

    #[test]
    fn y0_boundary() {
        let mut d = row_71();
        d.q_w = d.w * d.q_v * d.v.exp() / (d.v * d.w.exp());
        assert!(y0_lower(&d).unwrap().value.abs() < 1e-20);
    }

    #[test]
    fn y0_degenerate() {
        let d = DecoyInputs { w: 0.16, ..row_71() };
        assert!(matches!(y0_lower(&d), Err(Error::DegenerateDecoy(_))));
    }

    #[test]
    fn row_71_values() {
        // frozen from a 50-digit evaluation of the closed forms
        let d = row_71();
        let y0 = y0_lower(&d).unwrap();
        assert_relative_eq!(y0.value, 2.537_449_845_979_68e-8, max_relative = 1e-9);
        let y1 = y1_lower(&d).unwrap();
        assert_relative_eq!(y1.value, 4.241_597_364_310_51e-5, max_relative = 1e-9);
        let e1 = e1_upper(&d, y1.value).unwrap();
        assert_relative_eq!(e1.value, 2.258_569_083_395_79e-2, max_relative = 1e-9);
        assert!(!y1.clamped() && !e1.clamped());
    }

    #[test]
    fn dead_channel() {
        let d = DecoyInputs {
            q_u: 0.0,
            q_v: 0.0,
            q_w: 0.0,
            ..row_71()
        };
        assert_eq!(y1_lower(&d).unwrap().value, 0.0);
        assert!(matches!(e1_upper(&d, 0.0), Err(Error::EstimationFailure(_))));
    }

    #[test]
    fn e1_numerator_vanishes() {
        let mut d = row_71();
        d.e_w = d.e_v * d.q_v * d.v.exp() / (d.q_w * d.w.exp());
        d.e_w = d.e_w.min(1.0);
        let mut d2 = d;
        d2.e_v = d.e_w * d.q_w * d.w.exp() / (d.q_v * d.v.exp());
        assert!(e1_upper(&d2, 1e-3).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn y1_zero_denominator() {
        // uv - uw - v^2 + w^2 = (v - w)(u - v - w) vanishes when u = v + w
        let d = DecoyInputs { u: 0.375, v: 0.25, w: 0.125, ..row_71() };
        assert!(matches!(y1_lower(&d), Err(Error::DegenerateDecoy(_))));
    }

    fn synthetic(eta: f64, y0: f64, e_det: f64, u: f64, v: f64, w: f64) -> (DecoyInputs, f64, f64) {
        // yield of n photons: 1 - (1 - y0)(1 - eta)^n; error of n photons: mixes e_det with 1/2 dark
        let yield_n = |n: i32| 1.0 - (1.0 - y0) * (1.0 - eta).powi(n);
        let err_n = |n: i32| {
            let y = yield_n(n);
            if y == 0.0 {
                0.0
            } else {
                (0.5 * y0 + e_det * (y - y0)) / y
            }
        };
        let gain = |mu: f64| {
            let mut q = 0.0;
            let mut qe = 0.0;
            let mut p = (-mu).exp();
            for n in 0..200 {
                if n > 0 {
                    p *= mu / n as f64;
                }
                q += p * yield_n(n);
                qe += p * yield_n(n) * err_n(n);
            }
            (q, if q > 0.0 { qe / q } else { 0.0 })
        };
        let (q_u, e_u) = gain(u);
        let (q_v, e_v) = gain(v);
        let (q_w, e_w) = gain(w);
        (
            DecoyInputs { u, v, w, q_u, q_v, q_w, e_u, e_v, e_w },
            yield_n(1),
            err_n(1),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn bounds_are_valid(
            eta in 1e-6f64..0.5,
            y0 in 0.0f64..1e-4,
            e_det in 0.0f64..0.1,
            u in 0.2f64..1.0,
            v_frac in 0.1f64..0.7,
            w in 0.0f64..0.01,
        ) {
            let v = (u * v_frac).max(w + 0.01);
            prop_assume!((u - v - w).abs() > 1e-3);
            let (d, true_y1, true_e1) = synthetic(eta, y0, e_det, u, v, w);
            let b0 = y0_lower(&d).unwrap();
            prop_assert!(b0.value <= y0 + 1e-12 * (1.0 + y0));
            let b1 = y1_lower(&d).unwrap();
            prop_assert!(b1.value <= true_y1 * (1.0 + 1e-9) + 1e-15);
            prop_assert!((0.0..=1.0).contains(&b1.value));
            if b1.value > 0.0 {
                let e1 = e1_upper(&d, b1.value).unwrap();
                prop_assert!(e1.value >= true_e1.min(0.5) - 1e-9);
                prop_assert!((0.0..=0.5).contains(&e1.value));
            }
        }

        #[test]
        fn noiseless_single_photon_channel(eta in 1e-5f64..0.9, u in 0.3f64..1.0) {
            let (d, true_y1, _) = synthetic(eta, 0.0, 0.0, u, 0.1, 0.0);
            let b1 = y1_lower(&d).unwrap();
            prop_assert!(b1.value <= true_y1 * (1.0 + 1e-9));
            if b1.value > 0.0 {
                let e1 = e1_upper(&d, b1.value).unwrap().value;
                prop_assert!((0.0..=0.5).contains(&e1));
            }
        }
    }
}

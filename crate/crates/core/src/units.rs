//! Unit conversions and information-theoretic helpers.

use crate::error::{Error, Result};

/// Converts a loss in decibels to a power transmittance, `10^(-loss/10)`.
pub fn db_to_transmittance(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) || !loss_db.is_finite() {
        return Err(Error::Domain {
            what: "loss_db",
            value: loss_db,
        });
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

pub fn transmittance_to_db(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain {
            what: "transmittance",
            value: eta,
        });
    }
    Ok(-10.0 * eta.log10())
}

/// Binary Shannon entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain {
            what: "probability",
            value: x,
        });
    }
    Ok(entropy_unchecked(x))
}

/// Binary entropy for callers that have already clamped `x` into [0, 1].
pub(crate) fn entropy_unchecked(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Poisson probability of `n` photons for mean photon number `mean`.
pub fn poisson_pmf(n: u32, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ln = -mean + n as f64 * mean.ln() - ln_factorial(n);
    ln.exp()
}

pub(crate) fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Equivalent fibre length for a given loss and attenuation coefficient.
pub fn equivalent_distance_km(loss_db: f64, alpha_db_per_km: f64) -> f64 {
    loss_db / alpha_db_per_km
}

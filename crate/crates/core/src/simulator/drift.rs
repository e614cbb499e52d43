use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linkmodel::{feedback_phase_error, FeedbackParams};

/// Advances the relative channel phase by a Wiener increment with standard
/// deviation `rate · √dt`, wrapped to `[0, 2π)`.
pub fn step_drift<R: Rng + ?Sized>(current: f64, dt: f64, fb: &FeedbackParams, rng: &mut R) -> f64 {
    debug_assert!(dt > 0.0);
    if fb.drift_rate_rad_per_s == 0.0 {
        return current;
    }
    let z: f64 = StandardNormal.sample(rng);
    (current + fb.drift_rate_rad_per_s * dt.sqrt() * z).rem_euclid(2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackOutcome {
    /// Phase misalignment left after the correction.
    pub residual: f64,
    pub lock_lost: bool,
}

/// One correction step. The D3 counts estimate the phase around the
/// quadrature lock point with error `2/√C`; the residual is Gaussian with that
/// error scaled by the misalignment coefficient. Without counts, or with
/// feedback disabled, the drift stays.
pub fn apply_feedback<R: Rng + ?Sized>(drift: f64, d3_window_counts: f64, fb: &FeedbackParams, rng: &mut R) -> FeedbackOutcome {
    if !fb.enabled {
        return FeedbackOutcome {
            residual: drift,
            lock_lost: false,
        };
    }
    match feedback_phase_error(d3_window_counts) {
        Ok(sigma) => {
            let residual = Normal::new(0.0, fb.misalignment_coefficient * sigma).map(|n| n.sample(rng)).unwrap_or(0.0);
            FeedbackOutcome {
                residual,
                lock_lost: false,
            }
        }
        Err(_) => FeedbackOutcome {
            residual: drift,
            lock_lost: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fb(rate: f64) -> FeedbackParams {
        FeedbackParams {
            drift_rate_rad_per_s: rate,
            ..Default::default()
        }
    }

    #[test]
    fn zero_rate_no_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(step_drift(1.25, 0.1, &fb(0.0), &mut rng), 1.25);
    }

    #[test]
    fn one_second_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = fb(0.7);
        let n = 10_000;
        let steps: Vec<f64> = (0..n)
            .map(|_| {
                let x = step_drift(PI, 1.0, &f, &mut rng);
                x - PI
            })
            .collect();
        let mean = steps.iter().sum::<f64>() / n as f64;
        let std = (steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((std / 0.7 - 1.0).abs() < 0.05, "{std}");
    }

    #[test]
    fn deterministic() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = 0.0;
            (0..100).map(|_| {
                x = step_drift(x, 0.01, &fb(0.7), &mut rng);
                x
            })
            .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn feedback_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = fb(0.7);
        let out = apply_feedback(2.0, f64::INFINITY, &f, &mut rng);
        assert_eq!(out.residual, 0.0);
        let lost = apply_feedback(2.0, 0.0, &f, &mut rng);
        assert!(lost.lock_lost && lost.residual == 2.0);
        let off = FeedbackParams { enabled: false, ..f };
        assert_eq!(apply_feedback(2.0, 400.0, &off, &mut rng).residual, 2.0);
        let n = 20_000;
        let r: Vec<f64> = (0..n).map(|_| apply_feedback(2.0, 400.0, &f, &mut rng).residual).collect();
        let std = (r.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
        let want = 0.1 * f.misalignment_coefficient;
        assert!((std / want - 1.0).abs() < 0.03, "{std}");
    }
}

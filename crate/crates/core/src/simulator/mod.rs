//! Event-level Monte Carlo of the twin-field link.

pub mod detect;
pub mod drift;
pub mod pulse;
pub mod sift;

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

pub use detect::{DetectionEvent, Detector, Interferometer};
pub use drift::{apply_feedback, step_drift, FeedbackOutcome};
pub use pulse::{prepare_pulse, prepare_reference, PulseState};
pub use sift::{announce, sift, twin_phases, Announcement, ComboCounts, ComboRecord, SiftResult, SiftedBit, Sifter};

use crate::error::{Error, Result};
use crate::linkmodel::FeedbackParams;
use crate::params::{ChannelParams, DetectorParams, ProtocolConfig, User};
use crate::tallies::{fold_qber, MeasurementTallies};

fn default_trace_bin() -> f64 {
    1.0
}

fn default_drift_step() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub protocol: ProtocolConfig,
    pub channel: ChannelParams,
    pub detector: DetectorParams,
    pub feedback: FeedbackParams,
    /// Number of encoded gates.
    pub n_gates: u64,
    pub rng_seed: u64,
    /// Wall-clock span of the session. Defaults to `n_gates / clock`; a longer
    /// span stretches the drift and feedback time base over fewer gates.
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default = "default_trace_bin")]
    pub trace_bin_s: f64,
    #[serde(default = "default_drift_step")]
    pub drift_step_s: f64,
    /// `[start, end)` windows in seconds with the phase feedback switched off.
    #[serde(default)]
    pub feedback_off: Vec<[f64; 2]>,
    /// A user whose pulses are blocked (single-arm measurement).
    #[serde(default)]
    pub blocked_user: Option<User>,
    /// Maximum number of raw key bit pairs kept in the report.
    #[serde(default)]
    pub keep_raw_key: usize,
}

impl SessionConfig {
    pub fn new(
        protocol: ProtocolConfig,
        channel: ChannelParams,
        detector: DetectorParams,
        feedback: FeedbackParams,
        n_gates: u64,
        rng_seed: u64,
    ) -> Self {
        Self {
            protocol,
            channel,
            detector,
            feedback,
            n_gates,
            rng_seed,
            duration_s: None,
            trace_bin_s: default_trace_bin(),
            drift_step_s: default_drift_step(),
            feedback_off: Vec::new(),
            blocked_user: None,
            keep_raw_key: 0,
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration_s
            .unwrap_or(self.n_gates as f64 / self.detector.clock_rate_hz)
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.channel.validate()?;
        self.detector.validate()?;
        self.feedback.validate()?;
        if let Some(d) = self.duration_s {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("duration {d} s must be positive")));
            }
        }
        if !(self.trace_bin_s > 0.0) || !(self.drift_step_s > 0.0) {
            return Err(Error::InvalidParameter("trace bin and drift step must be positive".into()));
        }
        if self.feedback_off.iter().any(|w| !(w[1] >= w[0])) {
            return Err(Error::InvalidParameter("feedback-off window ends before it starts".into()));
        }
        Ok(())
    }

    fn feedback_active(&self, t: f64) -> bool {
        self.feedback.enabled && !self.feedback_off.iter().any(|w| t >= w[0] && t < w[1])
    }
}

/// Key-basis error statistics of one trace bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t_start_s: f64,
    pub sifted: u64,
    pub errors: u64,
    pub qber_raw: Option<f64>,
    /// `min(e, 1 - e)`.
    pub qber: Option<f64>,
    pub feedback_on: bool,
}

impl TracePoint {
    fn new(t_start_s: f64, feedback_on: bool) -> Self {
        Self {
            t_start_s,
            sifted: 0,
            errors: 0,
            qber_raw: None,
            qber: None,
            feedback_on,
        }
    }

    fn close(&mut self) {
        if self.sifted > 0 {
            let e = self.errors as f64 / self.sifted as f64;
            self.qber_raw = Some(e);
            self.qber = Some(fold_qber(e));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub gates: u64,
    pub duration_s: f64,
    pub reference_pulses: f64,
    pub d1: u64,
    pub d2: u64,
    pub double_clicks: u64,
    pub key_bits: u64,
    pub key_errors: u64,
    pub key_qber: Option<f64>,
    pub lock_losses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub config: SessionConfig,
    pub summary: SessionSummary,
    pub tallies: MeasurementTallies,
    pub counts: Vec<ComboRecord>,
    pub trace: Vec<TracePoint>,
    /// Times of correction windows where D3 saw no counts.
    pub lock_loss_times_s: Vec<f64>,
    pub raw_key: Vec<(u8, u8)>,
}

impl SessionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t_start_s,sifted,errors,qber_raw,qber,feedback_on\n");
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for p in &self.trace {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.t_start_s,
                p.sifted,
                p.errors,
                opt(p.qber_raw),
                opt(p.qber),
                p.feedback_on
            );
        }
        out
    }
}

fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Runs a session; see [`run_session_observed`].
pub fn run_session(cfg: &SessionConfig) -> Result<SessionReport> {
    run_session_observed(cfg, |_| {})
}

/// Runs a session, handing every encoded-gate event to `observer`.
///
/// Reference pulses are not simulated one by one. At the end of each
/// correction window the D3 count is drawn as a Poisson variate around the
/// expected count of the window's reference pulses at the current
/// misalignment, and the correction is updated from it.
pub fn run_session_observed<F: FnMut(&DetectionEvent)>(cfg: &SessionConfig, mut observer: F) -> Result<SessionReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let interf = Interferometer::new(&cfg.channel, &cfg.detector, cfg.feedback.opll_phase_variance_rad2)?;
    let fb = &cfg.feedback;
    let duration = cfg.duration();
    let dt = if cfg.n_gates > 0 { duration / cfg.n_gates as f64 } else { 0.0 };
    let duty = fb.reference_duty;
    let refs_per_window = cfg.detector.clock_rate_hz * duty / (1.0 - duty) * fb.correction_interval_s;
    let ref_mu = prepare_reference(&cfg.protocol).mean_photon;
    let me = cfg.detector.modulation_error;

    let mut sifter = Sifter::new(&cfg.protocol).with_raw_key(cfg.keep_raw_key);
    let mut drift = 0.0_f64;
    let mut correction = 0.0_f64;
    let mut next_tick = cfg.drift_step_s;
    let mut next_window = fb.correction_interval_s;
    let mut windows = 0u64;
    let mut lock_losses = Vec::new();
    let mut trace: Vec<TracePoint> = Vec::new();
    let (mut d1, mut d2, mut doubles) = (0u64, 0u64, 0u64);

    for g in 0..cfg.n_gates {
        let t = (g as f64 + 0.5) * dt;
        while next_tick <= t {
            drift = step_drift(drift, cfg.drift_step_s, fb, &mut rng);
            next_tick += cfg.drift_step_s;
        }
        while next_window <= t {
            windows += 1;
            if cfg.feedback_active(next_window) {
                let offset = wrap_pi(drift - correction);
                let lambda = refs_per_window * interf.reference_click_probability(ref_mu, PI / 2.0 + offset);
                let counts = if lambda > 0.0 {
                    Poisson::new(lambda).map(|p| p.sample(&mut rng)).unwrap_or(lambda)
                } else {
                    0.0
                };
                let out = apply_feedback(offset, counts, fb, &mut rng);
                if out.lock_lost {
                    lock_losses.push(next_window);
                } else {
                    correction = drift - out.residual;
                }
            }
            next_window += fb.correction_interval_s;
        }
        let bin = (t / cfg.trace_bin_s) as usize;
        while trace.len() <= bin {
            let start = trace.len() as f64 * cfg.trace_bin_s;
            trace.push(TracePoint::new(start, cfg.feedback_active(start)));
        }

        let mut alice = prepare_pulse(User::Alice, &cfg.protocol, &mut rng);
        let mut bob = prepare_pulse(User::Bob, &cfg.protocol, &mut rng);
        match cfg.blocked_user {
            Some(User::Alice) => alice.mean_photon = 0.0,
            Some(User::Bob) => bob.mean_photon = 0.0,
            None => {}
        }
        let mut phase = wrap_pi(drift - correction);
        if me > 0.0 && rng.random::<f64>() < me {
            phase += PI;
        }
        let event = interf.detect(g, alice, bob, phase, &mut rng);
        match event.detector {
            Detector::D1 => d1 += 1,
            Detector::D2 => d2 += 1,
            _ => {}
        }
        doubles += event.double_click as u64;
        observer(&event);
        if let Some(bit) = sifter.push(&event) {
            if bit.key {
                let p = &mut trace[bin];
                p.sifted += 1;
                p.errors += bit.is_error() as u64;
            }
        }
    }
    for p in &mut trace {
        p.close();
    }
    let sifted = sifter.finish()?;
    let summary = SessionSummary {
        gates: cfg.n_gates,
        duration_s: duration,
        reference_pulses: refs_per_window * windows as f64,
        d1,
        d2,
        double_clicks: doubles,
        key_bits: sifted.key_bits,
        key_errors: sifted.key_errors,
        key_qber: (sifted.key_bits > 0).then(|| sifted.key_errors as f64 / sifted.key_bits as f64),
        lock_losses: lock_losses.len(),
    };
    Ok(SessionReport {
        config: cfg.clone(),
        summary,
        tallies: sifted.tallies,
        counts: sifted.counts,
        trace,
        lock_loss_times_s: lock_losses,
        raw_key: sifted.raw_key,
    })
}

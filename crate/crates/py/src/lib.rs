//! Python bindings. Parameter classes are thin wrappers over the Rust structs
//! and accept keyword overrides of any serialised field; results come back
//! as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyAttributeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use tfqkd::data::{self, Dataset, Schema};
use tfqkd::keyrates::{self, model_report, report_from_tallies, supremacy_report};
use tfqkd::linkmodel::{self, ArmMode, FeedbackParams};
use tfqkd::params::{ChannelParams, DetectorParams, ProtocolConfig, ProtocolVariant};
use tfqkd::report::KeyRateReport;
use tfqkd::simulator::{run_session, SessionConfig};
use tfqkd::validation::{self, MonteCarloSizes, Tolerances};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize + ?Sized>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(x).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// JSON value of a Python object; wrapper classes go through their own `to_json`.
fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let text: String = if obj.hasattr("to_json")? {
        obj.call_method0("to_json")?.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(value_err)
}

fn merge(mut base: Value, changes: Option<&Bound<'_, PyDict>>) -> PyResult<Value> {
    let Some(changes) = changes else { return Ok(base) };
    let obj = base.as_object_mut().expect("parameter structs serialise to objects");
    for (k, v) in changes.iter() {
        let key: String = k.extract()?;
        if !obj.contains_key(&key) {
            return Err(PyAttributeError::new_err(format!("unknown field {key:?}")));
        }
        obj.insert(key, from_py(&v)?);
    }
    Ok(base)
}

trait Checked {
    fn check(&self) -> tfqkd::Result<()>;
}

impl Checked for ProtocolConfig {
    fn check(&self) -> tfqkd::Result<()> {
        self.validate()
    }
}
impl Checked for ChannelParams {
    fn check(&self) -> tfqkd::Result<()> {
        self.validate()
    }
}
impl Checked for DetectorParams {
    fn check(&self) -> tfqkd::Result<()> {
        self.validate()
    }
}
impl Checked for FeedbackParams {
    fn check(&self) -> tfqkd::Result<()> {
        self.validate()
    }
}
impl Checked for SessionConfig {
    fn check(&self) -> tfqkd::Result<()> {
        self.validate()
    }
}

macro_rules! json_class {
    ($py_ty:ident, $name:literal, $inner:ty $(, { $($extra:tt)* })?) => {
        #[pyclass(name = $name, module = "tfqkd_py", frozen, skip_from_py_object)]
        #[derive(Clone)]
        pub struct $py_ty {
            inner: $inner,
        }

        impl $py_ty {
            fn from_value(v: Value) -> PyResult<Self> {
                let inner: $inner = serde_json::from_value(v).map_err(value_err)?;
                inner.check().map_err(value_err)?;
                Ok(Self { inner })
            }
        }

        #[pymethods]
        impl $py_ty {
            #[new]
            #[pyo3(signature = (**fields))]
            fn new(fields: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
                let fields = fields.map(|d| d.copy()).transpose()?;
                let base = Self::base(fields.as_ref())?;
                Self::from_value(merge(serde_json::to_value(base).map_err(value_err)?, fields.as_ref())?)
            }

            #[staticmethod]
            fn from_json(text: &str) -> PyResult<Self> {
                Self::from_value(serde_json::from_str(text).map_err(value_err)?)
            }

            fn to_json(&self) -> PyResult<String> {
                serde_json::to_string(&self.inner).map_err(value_err)
            }

            fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
                to_py(py, &self.inner)
            }

            /// Copy with some fields changed.
            #[pyo3(signature = (**changes))]
            fn replace(&self, changes: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
                Self::from_value(merge(serde_json::to_value(&self.inner).map_err(value_err)?, changes)?)
            }

            fn __getattr__<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
                let v = serde_json::to_value(&self.inner).map_err(value_err)?;
                match v.get(name) {
                    Some(x) => to_py(py, x),
                    None => Err(PyAttributeError::new_err(name.to_string())),
                }
            }

            fn __eq__(&self, other: &Bound<'_, PyAny>) -> bool {
                match other.cast::<Self>() {
                    Ok(o) => serde_json::to_value(&self.inner).ok() == serde_json::to_value(&o.get().inner).ok(),
                    Err(_) => false,
                }
            }

            fn __repr__(&self) -> String {
                format!("{}({})", $name, serde_json::to_string(&self.inner).unwrap_or_default())
            }

            $($($extra)*)?
        }
    };
}

json_class!(PyProtocolConfig, "ProtocolConfig", ProtocolConfig, {
    #[staticmethod]
    fn reference(variant: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ProtocolConfig::reference(parse_variant(variant)?),
        })
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.name()
    }
});
json_class!(PyChannelParams, "ChannelParams", ChannelParams);
json_class!(PyDetectorParams, "DetectorParams", DetectorParams);
json_class!(PyFeedbackParams, "FeedbackParams", FeedbackParams);
json_class!(PySessionConfig, "SessionConfig", SessionConfig);

fn parse_variant(s: &str) -> PyResult<ProtocolVariant> {
    s.parse().map_err(value_err)
}

/// Pops `key` from `fields` when present.
fn take<'py>(fields: Option<&Bound<'py, PyDict>>, key: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
    let Some(d) = fields else { return Ok(None) };
    let v = d.get_item(key)?;
    if v.is_some() {
        d.del_item(key)?;
    }
    Ok(v)
}

impl PyProtocolConfig {
    /// Reference settings of `variant` (a name such as "curty"), send-not-send by default.
    fn base(fields: Option<&Bound<'_, PyDict>>) -> PyResult<ProtocolConfig> {
        let variant = match take(fields, "variant")? {
            Some(v) => parse_variant(&v.extract::<String>()?)?,
            None => ProtocolVariant::SendNotSend,
        };
        Ok(ProtocolConfig::reference(variant))
    }
}

impl PyChannelParams {
    fn base(_: Option<&Bound<'_, PyDict>>) -> PyResult<ChannelParams> {
        Ok(ChannelParams::default())
    }
}

impl PyDetectorParams {
    fn base(_: Option<&Bound<'_, PyDict>>) -> PyResult<DetectorParams> {
        Ok(DetectorParams::default())
    }
}

impl PyFeedbackParams {
    fn base(_: Option<&Bound<'_, PyDict>>) -> PyResult<FeedbackParams> {
        Ok(FeedbackParams::default())
    }
}

impl PySessionConfig {
    /// Send-not-send at 40 dB with 10^6 gates and seed 0 unless overridden.
    fn base(_: Option<&Bound<'_, PyDict>>) -> PyResult<SessionConfig> {
        Ok(SessionConfig::new(
            ProtocolConfig::reference(ProtocolVariant::SendNotSend),
            ChannelParams::symmetric(40.0).map_err(value_err)?,
            DetectorParams::default(),
            FeedbackParams::default(),
            1_000_000,
            0,
        ))
    }
}

fn det_or_default(d: Option<PyRef<'_, PyDetectorParams>>) -> DetectorParams {
    d.map(|d| d.inner).unwrap_or_default()
}

fn fb_or_default(f: Option<PyRef<'_, PyFeedbackParams>>) -> FeedbackParams {
    f.map(|f| f.inner).unwrap_or_default()
}

/// Phase-averaged D1 gain per gate for per-user intensities `mu_a`, `mu_b`.
#[pyfunction]
#[pyo3(signature = (mu_a, mu_b, channel, detector=None))]
fn expected_gain(
    mu_a: f64,
    mu_b: f64,
    channel: PyRef<'_, PyChannelParams>,
    detector: Option<PyRef<'_, PyDetectorParams>>,
) -> PyResult<f64> {
    linkmodel::expected_gain(mu_a, mu_b, &channel.inner, &det_or_default(detector), ArmMode::Double).map_err(value_err)
}

/// QBER breakdown of signal pulses with total mean photon number `mu`.
#[pyfunction]
#[pyo3(signature = (mu, channel, detector=None, feedback=None))]
fn expected_qber<'py>(
    py: Python<'py>,
    mu: f64,
    channel: PyRef<'_, PyChannelParams>,
    detector: Option<PyRef<'_, PyDetectorParams>>,
    feedback: Option<PyRef<'_, PyFeedbackParams>>,
) -> PyResult<Bound<'py, PyAny>> {
    let q = linkmodel::expected_qber(mu, &channel.inner, &det_or_default(detector), &fb_or_default(feedback))
        .map_err(value_err)?;
    to_py(py, &q)
}

/// Model gains, QBERs and key rate at the loss of `channel`.
#[pyfunction]
#[pyo3(signature = (config, channel, detector=None, feedback=None))]
fn model_key_rate<'py>(
    py: Python<'py>,
    config: PyRef<'_, PyProtocolConfig>,
    channel: PyRef<'_, PyChannelParams>,
    detector: Option<PyRef<'_, PyDetectorParams>>,
    feedback: Option<PyRef<'_, PyFeedbackParams>>,
) -> PyResult<Bound<'py, PyAny>> {
    let det = det_or_default(detector);
    let point = linkmodel::evaluate_point(&config.inner, &channel.inner, &det, &fb_or_default(feedback))
        .map_err(value_err)?;
    let report = model_report(&point, &config.inner, det.clock_rate_hz).map_err(value_err)?;
    to_py(py, &serde_json::json!({ "point": point, "report": report }))
}

/// Model key rate over a loss grid, with the capacity comparison per point.
#[pyfunction]
#[pyo3(signature = (config, losses_db, channel=None, detector=None, feedback=None))]
fn sweep<'py>(
    py: Python<'py>,
    config: PyRef<'_, PyProtocolConfig>,
    losses_db: Vec<f64>,
    channel: Option<PyRef<'_, PyChannelParams>>,
    detector: Option<PyRef<'_, PyDetectorParams>>,
    feedback: Option<PyRef<'_, PyFeedbackParams>>,
) -> PyResult<Bound<'py, PyList>> {
    let channel = channel.map(|c| c.inner).unwrap_or_default();
    let det = det_or_default(detector);
    let points = linkmodel::sweep_loss(&config.inner, &losses_db, &channel, &det, &fb_or_default(feedback))
        .map_err(value_err)?;
    let reports = points
        .iter()
        .map(|p| model_report(p, &config.inner, det.clock_rate_hz))
        .collect::<tfqkd::Result<Vec<_>>>()
        .map_err(value_err)?;
    let sup = supremacy_report(&reports, det.clock_rate_hz).map_err(value_err)?;
    let out = PyList::empty(py);
    for (r, s) in reports.iter().zip(&sup) {
        let d = to_py(py, r)?;
        d.set_item("beats_ideal", s.beats_ideal)?;
        d.set_item("beats_realistic", s.beats_realistic)?;
        out.append(d)?;
    }
    Ok(out)
}

fn schema_of(s: &str) -> PyResult<Schema> {
    s.parse().map_err(value_err)
}

/// Reads a measurement table or session file.
#[pyfunction]
#[pyo3(signature = (path, schema="attenuation", strict=false))]
fn load_table<'py>(py: Python<'py>, path: PathBuf, schema: &str, strict: bool) -> PyResult<Bound<'py, PyAny>> {
    let got = data::ingest(&path, schema_of(schema)?, strict).map_err(value_err)?;
    let warnings: Vec<String> = got.warnings.iter().map(|w| format!("line {}: {}", w.line, w.message)).collect();
    to_py(py, &serde_json::json!({ "data": got.data, "warnings": warnings }))
}

/// Key rate of every row of a table; the bundled table for the variant when `path` is None.
#[pyfunction]
#[pyo3(signature = (config, path=None, schema=None, measured_w=false, strict=false))]
fn key_rates<'py>(
    py: Python<'py>,
    config: PyRef<'_, PyProtocolConfig>,
    path: Option<PathBuf>,
    schema: Option<&str>,
    measured_w: bool,
    strict: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner;
    let schema = match schema {
        Some(s) => schema_of(s)?,
        None if cfg.variant == ProtocolVariant::Curty => Schema::Combos,
        None => Schema::Attenuation,
    };
    let got = match (&path, schema) {
        (Some(p), _) => data::ingest(p, schema, strict),
        (None, Schema::Combos) => data::ingest_str(data::BUNDLED_COMBOS_CSV, schema, strict),
        (None, Schema::Attenuation) => data::ingest_str(data::BUNDLED_ATTENUATION_CSV, schema, strict),
        (None, Schema::Session) => return Err(PyValueError::new_err("session input needs a path")),
    }
    .map_err(value_err)?;
    let clock = DetectorParams::default().clock_rate_hz;
    let at = |loss: f64, r: KeyRateReport| r.at_loss(loss, clock);
    let reports = match &got.data {
        Dataset::Attenuation(rows) => rows
            .iter()
            .map(|r| at(r.total_loss_db, report_from_tallies(&r.to_tallies()?, &cfg, clock, measured_w)?))
            .collect::<tfqkd::Result<Vec<_>>>(),
        Dataset::Combos(rows) => rows
            .iter()
            .map(|r| at(r.total_loss_db, report_from_tallies(&r.to_tallies()?, &cfg, clock, measured_w)?))
            .collect(),
        Dataset::Session(ts) => ts.iter().map(|t| report_from_tallies(t, &cfg, clock, measured_w)).collect(),
    }
    .map_err(value_err)?;
    to_py(py, &reports)
}

#[pyfunction]
#[pyo3(signature = (loss_db, clock_rate_hz=1e9))]
fn skc0_ideal(loss_db: f64, clock_rate_hz: f64) -> PyResult<f64> {
    keyrates::skc0_ideal(loss_db, clock_rate_hz).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (loss_db, clock_rate_hz=1e9))]
fn skc0_realistic(loss_db: f64, clock_rate_hz: f64) -> PyResult<f64> {
    keyrates::skc0_realistic(
        loss_db,
        clock_rate_hz,
        keyrates::REALISTIC_DETECTION_EFFICIENCY,
        keyrates::REALISTIC_EXTRA_LOSS_DB,
    )
    .map_err(value_err)
}

#[pyfunction]
fn binary_entropy(x: f64) -> PyResult<f64> {
    tfqkd::units::binary_entropy(x).map_err(value_err)
}

/// Runs a Monte Carlo session and returns the full report.
#[pyfunction]
fn simulate<'py>(py: Python<'py>, session: PyRef<'_, PySessionConfig>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = session.inner.clone();
    let report = py.detach(move || run_session(&cfg)).map_err(value_err)?;
    to_py(py, &report)
}

/// Runs the acceptance checks on the bundled tables.
/// Returns one dict per criterion with `id`, `title`, `passed` and `line`.
#[pyfunction]
#[pyo3(signature = (quick=true, tolerance_pct=None, seed=None))]
fn validate<'py>(
    py: Python<'py>,
    quick: bool,
    tolerance_pct: Option<f64>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyList>> {
    let tol = match tolerance_pct {
        Some(p) => Tolerances::default().with_override(p),
        None => Tolerances::default(),
    };
    let mut mc = MonteCarloSizes::default();
    if quick {
        mc = mc.scaled(0.05);
    }
    if let Some(s) = seed {
        mc.seed = s;
    }
    let report = py
        .detach(move || -> tfqkd::Result<_> {
            let rows = data::bundled_attenuation_rows()?;
            let combo = data::bundled_combo_rows()?.remove(0);
            validation::run_all(&rows, &combo, &tol, &mc)
        })
        .map_err(value_err)?;
    let out = PyList::empty(py);
    for o in &report.outcomes {
        let d = PyDict::new(py);
        d.set_item("id", o.id)?;
        d.set_item("title", &o.title)?;
        d.set_item("passed", o.passed())?;
        d.set_item("line", o.line())?;
        out.append(d)?;
    }
    Ok(out)
}

#[pymodule]
fn tfqkd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProtocolConfig>()?;
    m.add_class::<PyChannelParams>()?;
    m.add_class::<PyDetectorParams>()?;
    m.add_class::<PyFeedbackParams>()?;
    m.add_class::<PySessionConfig>()?;
    m.add_function(wrap_pyfunction!(expected_gain, m)?)?;
    m.add_function(wrap_pyfunction!(expected_qber, m)?)?;
    m.add_function(wrap_pyfunction!(model_key_rate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(load_table, m)?)?;
    m.add_function(wrap_pyfunction!(key_rates, m)?)?;
    m.add_function(wrap_pyfunction!(skc0_ideal, m)?)?;
    m.add_function(wrap_pyfunction!(skc0_realistic, m)?)?;
    m.add_function(wrap_pyfunction!(binary_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}

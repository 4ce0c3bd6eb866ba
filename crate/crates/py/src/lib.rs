//! Python bindings: scenarios and runs, the BSM codec, the motion model and
//! extended time-to-collision.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::de::DeserializeOwned;
use wearsafe_core::harness::{self, generators, HarnessError, ReportFormat, RunOptions};
use wearsafe_core::netsim::wire::{self, Frame};
use wearsafe_core::reachset;
use wearsafe_core::world::{self, Maneuver, TransportMode};
use wearsafe_core::Vec2;

create_exception!(wearsafe, WearsafeError, PyException);
create_exception!(wearsafe, ConfigError, WearsafeError);
create_exception!(wearsafe, RuntimeFault, WearsafeError);
create_exception!(wearsafe, WireError, WearsafeError);

fn harness_err(e: HarnessError) -> PyErr {
    if e.is_config() {
        ConfigError::new_err(e.to_string())
    } else {
        RuntimeFault::new_err(e.to_string())
    }
}

fn wire_err(e: wire::WireError) -> PyErr {
    WireError::new_err(e.to_string())
}

/// Parses a snake_case enum name such as "maintain_course" or "car".
fn named<T: DeserializeOwned>(kind: &str, name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| ConfigError::new_err(format!("unknown {kind} {name:?}")))
}

#[pyclass(name = "KinematicState", from_py_object)]
#[derive(Clone, Copy)]
struct PyState {
    inner: world::KinematicState,
}

#[pymethods]
impl PyState {
    #[new]
    #[pyo3(signature = (x, y, heading, speed, accel = 0.0, yaw_rate = 0.0))]
    fn new(x: f64, y: f64, heading: f64, speed: f64, accel: f64, yaw_rate: f64) -> PyResult<Self> {
        let mut inner = world::KinematicState::new(Vec2::new(x, y), heading, speed);
        inner.accel = accel;
        inner.yaw_rate = yaw_rate;
        inner.validate().map_err(|e| ConfigError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    #[getter]
    fn x(&self) -> f64 {
        self.inner.position.x
    }
    #[getter]
    fn y(&self) -> f64 {
        self.inner.position.y
    }
    #[getter]
    fn heading(&self) -> f64 {
        self.inner.heading
    }
    #[getter]
    fn speed(&self) -> f64 {
        self.inner.speed
    }
    #[getter]
    fn accel(&self) -> f64 {
        self.inner.accel
    }
    #[getter]
    fn yaw_rate(&self) -> f64 {
        self.inner.yaw_rate
    }

    /// Advances the state by `dt` seconds under a maneuver for a transport mode.
    fn step(&self, maneuver: &str, mode: &str, dt: f64) -> PyResult<Self> {
        let m: Maneuver = named("maneuver", maneuver)?;
        let mode: TransportMode = named("mode", mode)?;
        let limits = world::default_limits(mode);
        let u = world::maneuver_to_control(m, &limits);
        let inner = world::step(&self.inner, u, &limits, dt).map_err(|e| ConfigError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "KinematicState(x={}, y={}, heading={}, speed={}, accel={}, yaw_rate={})",
            s.position.x, s.position.y, s.heading, s.speed, s.accel, s.yaw_rate
        )
    }
}

/// Straight-line time until two footprints touch, or None when not closing.
#[pyfunction]
fn extended_ttc(a: PyState, b: PyState, ra: f64, rb: f64) -> Option<f64> {
    reachset::extended_ttc(&a.inner, &b.inner, ra, rb)
}

#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: harness::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        harness::Scenario::from_json(text)
            .map(|inner| Self { inner })
            .map_err(harness_err)
    }

    /// Builds a scenario from a named generator: collision_course, pass_by,
    /// parallel_lanes, imminent, reversal, spoof or fuzz.
    #[staticmethod]
    #[pyo3(signature = (name, seed, spacing = 20.0))]
    fn generate(name: &str, seed: u64, spacing: f64) -> PyResult<Self> {
        let inner = match name {
            "collision_course" => generators::collision_course(seed),
            "pass_by" => generators::pass_by(seed),
            "parallel_lanes" => generators::parallel_lanes(seed, spacing),
            "imminent" => generators::imminent(seed),
            "reversal" => generators::reversal(seed),
            "spoof" => generators::spoof(seed, true),
            "fuzz" => generators::fuzz(seed),
            other => return Err(ConfigError::new_err(format!("unknown generator {other:?}"))),
        };
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }
    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }
    #[getter]
    fn advisories(&self) -> bool {
        self.inner.toggles.advisories
    }
    #[setter]
    fn set_advisories(&mut self, on: bool) {
        self.inner.toggles.advisories = on;
    }
    #[getter]
    fn channel_profile(&self) -> String {
        self.inner.channel_profile.clone()
    }
    #[setter]
    fn set_channel_profile(&mut self, name: String) -> PyResult<()> {
        let mut s = self.inner.clone();
        s.channel_profile = name;
        s.validate().map_err(harness_err)?;
        self.inner = s;
        Ok(())
    }

    /// Runs the simulation. Releases the GIL while it executes.
    #[pyo3(signature = (dump_coordinator = false))]
    fn run(&self, py: Python<'_>, dump_coordinator: bool) -> PyResult<PyRunResult> {
        let s = self.inner.clone();
        let out = py
            .detach(move || harness::run(&s, &RunOptions { dump_coordinator }))
            .map_err(harness_err)?;
        Ok(PyRunResult { inner: out })
    }
}

#[pyclass(name = "RunResult")]
struct PyRunResult {
    inner: harness::RunOutput,
}

#[pymethods]
impl PyRunResult {
    /// Summary metrics as a JSON document.
    fn metrics_json(&self) -> String {
        serde_json::to_string(&self.inner.metrics).expect("metrics are plain data")
    }

    #[getter]
    fn collisions(&self) -> u64 {
        self.inner.metrics.collisions
    }
    #[getter]
    fn advisories_issued(&self) -> u64 {
        self.inner.metrics.advisories_issued
    }
    #[getter]
    fn reversals(&self) -> u64 {
        self.inner.metrics.reversals
    }
    #[getter]
    fn trace(&self) -> Vec<String> {
        self.inner.trace.clone()
    }

    fn trace_sha256(&self) -> String {
        self.inner.trace_sha256()
    }

    /// Writes trace.jsonl, summary.json and summary.csv into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.write(&dir).map_err(harness_err)
    }
}

/// False-positive rate of a run with advisories against its baseline.
#[pyfunction]
fn false_positive_rate(enabled: &PyRunResult, baseline: &PyRunResult) -> PyResult<f64> {
    harness::false_positive_rate(&enabled.inner.metrics, &baseline.inner.metrics)
        .map(|fp| fp.rate())
        .map_err(harness_err)
}

/// Aggregates every trace under `dir`; `format` is "text" or "csv".
#[pyfunction]
#[pyo3(signature = (dir, format = "text"))]
fn report(dir: PathBuf, format: &str) -> PyResult<String> {
    let f = match format {
        "text" => ReportFormat::Text,
        "csv" => ReportFormat::Csv,
        other => return Err(ConfigError::new_err(format!("unknown report format {other:?}"))),
    };
    harness::report(&dir).map(|r| r.render(f)).map_err(harness_err)
}

/// Encodes a BSM given as JSON (the serde form of the message).
#[pyfunction]
fn encode_bsm<'py>(py: Python<'py>, bsm_json: &str) -> PyResult<Bound<'py, PyBytes>> {
    let b: wire::Bsm = serde_json::from_str(bsm_json).map_err(|e| ConfigError::new_err(e.to_string()))?;
    let bytes = wire::encode_bsm(&b).map_err(wire_err)?;
    Ok(PyBytes::new(py, &bytes))
}

/// Decodes any frame to JSON tagged with "bsm" or "advisory".
#[pyfunction]
fn decode_frame(bytes: &[u8]) -> PyResult<String> {
    let v = match wire::decode_frame(bytes).map_err(wire_err)? {
        Frame::Bsm(b) => serde_json::json!({ "bsm": b }),
        Frame::Advisory(a) => serde_json::json!({ "advisory": a }),
    };
    Ok(v.to_string())
}

/// The all-zero BSM pinned by the golden file, as JSON.
#[pyfunction]
fn zero_bsm_json() -> String {
    serde_json::to_string(&wire::Bsm::zero()).expect("bsm is plain data")
}

#[pymodule]
fn wearsafe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("WearsafeError", py.get_type::<WearsafeError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("RuntimeFault", py.get_type::<RuntimeFault>())?;
    m.add("WireError", py.get_type::<WireError>())?;
    m.add_class::<PyState>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(extended_ttc, m)?)?;
    m.add_function(wrap_pyfunction!(false_positive_rate, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(encode_bsm, m)?)?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(zero_bsm_json, m)?)?;
    Ok(())
}

//! Python bindings for the three-qubit heat-transport model.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use triqubit::config::read_config;
use triqubit::functions::{self, RectifierMode, DEFAULT_EPSILON, DEFAULT_STEP, VALVE_GRID};
use triqubit::model::secular_report;
use triqubit::steady::{self, liouvillian_oracle};
use triqubit::sweep::{run_sweep, write_csv};
use triqubit::validate::validate_device;
use triqubit::{validate_params, BathSpec, DeviceParams, Spectrum, Terminal};

create_exception!(triqubit_py, TriqubitError, PyException);
create_exception!(triqubit_py, ValidationError, TriqubitError);
create_exception!(triqubit_py, NumericalError, TriqubitError);

fn to_py(e: triqubit::Error) -> PyErr {
    if e.is_validation() {
        ValidationError::new_err(e.to_string())
    } else {
        NumericalError::new_err(e.to_string())
    }
}

fn terminal(label: &str) -> PyResult<Terminal> {
    Terminal::from_label(label)
        .ok_or_else(|| ValidationError::new_err(format!("expected terminal L, M or R, got {label}")))
}

/// A validated device: three qubits with ω_L + ω_M = ω_R and one bath per qubit.
#[pyclass(name = "Device", module = "triqubit_py", frozen)]
struct PyDevice {
    inner: triqubit::Device,
}

#[pymethods]
impl PyDevice {
    /// `temperatures` and `gamma` are (L, M, R); a single gamma applies to all baths.
    #[new]
    #[pyo3(signature = (omega_l, g, temperatures, omega_r = 1.0, gamma = None, gammas = None, spectrum = "Flat"))]
    fn new(
        omega_l: f64,
        g: f64,
        temperatures: [f64; 3],
        omega_r: f64,
        gamma: Option<f64>,
        gammas: Option<[f64; 3]>,
        spectrum: &str,
    ) -> PyResult<Self> {
        let spectrum = Spectrum::from_name(spectrum)
            .ok_or_else(|| ValidationError::new_err(format!("expected Flat or Ohmic, got {spectrum}")))?;
        let gammas = match (gamma, gammas) {
            (Some(_), Some(_)) => return Err(ValidationError::new_err("give gamma or gammas, not both")),
            (_, Some(gs)) => gs,
            (Some(x), None) => [x; 3],
            (None, None) => [triqubit::config::DEFAULT_GAMMA; 3],
        };
        let baths = Terminal::ALL.map(|t| BathSpec::new(t, temperatures[t.index()], gammas[t.index()], spectrum));
        let inner = validate_params(DeviceParams::resonant(omega_l, omega_r, g), baths).map_err(to_py)?;
        Ok(PyDevice { inner })
    }

    /// Load the device section of a JSON run configuration.
    #[staticmethod]
    #[pyo3(signature = (path, overrides = Vec::new()))]
    fn from_config(path: PathBuf, overrides: Vec<String>) -> PyResult<Self> {
        let cfg = read_config(&path, &overrides).map_err(to_py)?;
        Ok(PyDevice { inner: cfg.device })
    }

    #[getter]
    fn omega_l(&self) -> f64 {
        self.inner.params.omega_l
    }

    #[getter]
    fn omega_m(&self) -> f64 {
        self.inner.params.omega_m
    }

    #[getter]
    fn omega_r(&self) -> f64 {
        self.inner.params.omega_r
    }

    #[getter]
    fn g(&self) -> f64 {
        self.inner.params.g
    }

    #[getter]
    fn temperatures(&self) -> [f64; 3] {
        self.inner.baths.map(|b| b.temperature)
    }

    #[getter]
    fn gammas(&self) -> [f64; 3] {
        self.inner.baths.map(|b| b.gamma)
    }

    fn with_temperature(&self, terminal_label: &str, temperature: f64) -> PyResult<Self> {
        let inner = self
            .inner
            .with_temperature(terminal(terminal_label)?, temperature)
            .map_err(to_py)?;
        Ok(PyDevice { inner })
    }

    /// Heat currents (Q_L, Q_M, Q_R); positive means absorbed from the bath.
    fn currents(&self) -> PyResult<[f64; 3]> {
        Ok(steady::currents(&self.inner).map_err(to_py)?.q)
    }

    /// Steady state, currents, energy levels and the secular check.
    fn steady_state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let e = steady::evaluate(&self.inner).map_err(to_py)?;
        let s = secular_report(&self.inner);
        let d = PyDict::new(py);
        d.set_item("currents", e.currents.q)?;
        d.set_item("entropy_production", e.currents.entropy_production)?;
        d.set_item("populations", e.state.populations)?;
        d.set_item("levels", e.eigen.levels)?;
        d.set_item("residual", e.state.residual)?;
        d.set_item("condition", e.state.condition)?;
        d.set_item("clipped", e.state.clipped)?;
        d.set_item("secular_ratio", s.ratio)?;
        d.set_item("secular_valid", s.valid)?;
        Ok(d)
    }

    /// Steady state from the full 64×64 master-equation generator.
    fn liouvillian<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let o = liouvillian_oracle(&self.inner).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("currents", o.currents.q)?;
        d.set_item("populations", o.state.populations)?;
        d.set_item("max_coherence", o.max_coherence)?;
        d.set_item("nullity", o.nullity)?;
        Ok(d)
    }

    #[pyo3(signature = (step = DEFAULT_STEP))]
    fn amplification<'py>(&self, py: Python<'py>, step: f64) -> PyResult<Bound<'py, PyDict>> {
        let a = functions::amplification(&self.inner, step).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("alpha_L", a.alpha_l)?;
        d.set_item("alpha_R", a.alpha_r)?;
        d.set_item("dQ_M_dT", a.dq_m_dt)?;
        d.set_item("step", a.step)?;
        d.set_item("flagged", a.flagged)?;
        Ok(d)
    }

    /// Crossings of each current through zero as T_M is scanned, as
    /// (terminal, T_M) pairs in scan order.
    #[pyo3(signature = (start = 0.005, stop = 1.0, points = VALVE_GRID))]
    fn valve(&self, start: f64, stop: f64, points: usize) -> PyResult<Vec<(String, f64)>> {
        let r = functions::valve_crossings(&self.inner, (start, stop), points).map_err(to_py)?;
        Ok(r.crossings
            .iter()
            .map(|c| (c.terminal.label().to_string(), c.temperature))
            .collect())
    }

    #[pyo3(signature = (delta_t, t_a, two_terminal = false))]
    fn rectification<'py>(
        &self,
        py: Python<'py>,
        delta_t: f64,
        t_a: f64,
        two_terminal: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mode = if two_terminal {
            RectifierMode::TwoTerminal
        } else {
            RectifierMode::ThreeTerminal
        };
        let r = functions::rectification(&self.inner, delta_t, t_a, mode).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("R", r.r)?;
        d.set_item("Q_fore", r.q_fore)?;
        d.set_item("Q_back", r.q_back)?;
        d.set_item("delta_T", r.delta_t)?;
        d.set_item("T_A", r.t_a)?;
        d.set_item("same_direction", r.same_direction)?;
        Ok(d)
    }

    #[pyo3(signature = (terminal_label = "L", start = 0.0, stop = 0.8, points = 81))]
    fn stabilizer<'py>(
        &self,
        py: Python<'py>,
        terminal_label: &str,
        start: f64,
        stop: f64,
        points: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let s = functions::stabilizer_sensitivity(&self.inner, terminal(terminal_label)?, (start, stop), points)
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("temperatures", s.temperatures)?;
        d.set_item("currents", s.currents)?;
        d.set_item("flatness", s.flatness)?;
        d.set_item("peak_slope", s.peak_slope)?;
        Ok(d)
    }

    /// Largest T_M up to which |Q_L| and |Q_R| stay below epsilon.
    #[pyo3(signature = (epsilon = DEFAULT_EPSILON, start = 0.0, stop = 0.6, points = 121))]
    fn switch(&self, epsilon: f64, start: f64, stop: f64, points: usize) -> PyResult<f64> {
        let s = functions::switch_threshold(&self.inner, epsilon, (start, stop), points).map_err(to_py)?;
        Ok(s.threshold)
    }

    /// Oracle cross-checks as (name, passed, warning, detail) tuples.
    #[pyo3(signature = (seed = 0, draws = 20))]
    fn validate(&self, py: Python<'_>, seed: u64, draws: usize) -> Vec<(String, bool, bool, String)> {
        let device = self.inner;
        let report = py.detach(|| validate_device(&device, seed, draws));
        report
            .checks
            .into_iter()
            .map(|c| (c.name, c.passed, c.warning, c.detail))
            .collect()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner.params;
        let t = self.temperatures();
        format!(
            "Device(omega_L={}, omega_M={}, omega_R={}, g={}, temperatures=({}, {}, {}), spectrum={})",
            p.omega_l,
            p.omega_m,
            p.omega_r,
            p.g,
            t[0],
            t[1],
            t[2],
            self.inner.baths[0].spectrum.name()
        )
    }
}

/// Run the sweep section of a config. Returns (header, rows); failed cells
/// are None. Writes the CSV too when `out` is given.
#[pyfunction]
#[pyo3(signature = (path, overrides = Vec::new(), out = None, threads = None))]
#[allow(clippy::type_complexity)]
fn sweep(
    py: Python<'_>,
    path: PathBuf,
    overrides: Vec<String>,
    out: Option<PathBuf>,
    threads: Option<usize>,
) -> PyResult<(Vec<String>, Vec<(Vec<f64>, Vec<Option<f64>>, Vec<String>)>)> {
    let spec = read_config(&path, &overrides)
        .and_then(|c| c.sweep_spec())
        .map_err(to_py)?;
    let result = py.detach(|| run_sweep(&spec, threads)).map_err(to_py)?;
    if let Some(p) = out {
        write_csv(&result, &p).map_err(to_py)?;
    }
    let mut header = result.axis_names.clone();
    header.extend(result.columns.iter().cloned());
    let rows = result.rows.into_iter().map(|r| (r.axes, r.values, r.flags)).collect();
    Ok((header, rows))
}

#[pymodule]
fn triqubit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyDevice>()?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add("TriqubitError", py.get_type::<TriqubitError>())?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

//! Python bindings for the remsim core: ensembles and pumping, combs, echo
//! propagation, Stark fits and process tomography.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use remsim_core::afc::{self, CombSpec, EchoObservation, ToothShape};
use remsim_core::echo::{self, EchoWindows, PolarizationChannel, TimeGrid};
use remsim_core::ion_ensemble::{AbsorptionSpectrum, GridSpec, IonEnsemble, Polarization};
use remsim_core::material::MaterialConfig;
use remsim_core::pump::{self, ClassFrame, EnhancedProfileReport, PumpSequence};
use remsim_core::stark::{self, StarkConfig, StarkPoint};
use remsim_core::tomography::{self, ProcessMatrix, QptConfig, TomographyCounts};
use serde::Serialize;

create_exception!(remsim, RemsimError, PyValueError);

fn err(e: impl std::fmt::Display) -> PyErr {
    RemsimError::new_err(e.to_string())
}

fn pol(s: &str) -> PyResult<Polarization> {
    match s {
        "H" | "h" => Ok(Polarization::H),
        "V" | "v" => Ok(Polarization::V),
        _ => Err(err(format!("polarization must be 'H' or 'V', got {s:?}"))),
    }
}

fn frame(s: &str) -> PyResult<ClassFrame> {
    match s {
        "pump1" => Ok(ClassFrame::pump1()),
        "pump2" => Ok(ClassFrame::pump2()),
        _ => Err(err(format!("frame must be 'pump1' or 'pump2', got {s:?}"))),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Ion ensemble: populations over the reference-frequency window.
#[pyclass(name = "Ensemble", module = "remsim")]
#[derive(Clone)]
struct PyEnsemble(IonEnsemble);

#[pymethods]
impl PyEnsemble {
    /// Natural ensemble of the default material, or of a material JSON document.
    #[new]
    #[pyo3(signature = (material_json=None))]
    fn new(material_json: Option<&str>) -> PyResult<Self> {
        let cfg = match material_json {
            Some(t) => MaterialConfig::from_json(t).map_err(err)?,
            None => MaterialConfig::default(),
        };
        cfg.ensemble().map(PyEnsemble).map_err(err)
    }

    fn natural_depth(&self, polarization: &str) -> PyResult<f64> {
        Ok(self.0.natural_depth(pol(polarization)?))
    }

    fn depth_at(&self, nu_mhz: f64, polarization: &str) -> PyResult<f64> {
        self.0.depth_at(nu_mhz, pol(polarization)?).map_err(err)
    }

    fn absorption(&self, polarization: &str) -> PyResult<PySpectrum> {
        Ok(PySpectrum(self.0.absorption(pol(polarization)?)))
    }

    fn conservation_error(&self) -> f64 {
        self.0.conservation_error()
    }

    /// Runs a pump sequence given as JSON.
    fn run_sequence(&self, sequence_json: &str) -> PyResult<Self> {
        let seq = PumpSequence::from_json(sequence_json).map_err(err)?;
        pump::run_sequence(&self.0, &seq).map(PyEnsemble).map_err(err)
    }

    /// Pump-1 then pump-2; returns (after_pump1, enhanced).
    fn prepare_enhanced(&self) -> PyResult<(Self, Self)> {
        let s = pump::prepare_enhanced_stages(&self.0).map_err(err)?;
        Ok((PyEnsemble(s.after_pump1), PyEnsemble(s.enhanced)))
    }

    fn enhanced_report(&self, py: Python<'_>, polarization: &str) -> PyResult<PyObject> {
        let r = EnhancedProfileReport::measure(&self.0, pol(polarization)?).map_err(err)?;
        to_py(py, &r)
    }

    /// Classes raised above `natural` in each half of the target band.
    #[pyo3(signature = (natural, polarization="H", frame_name="pump1", threshold=1e-3))]
    fn class_membership(
        &self,
        py: Python<'_>,
        natural: &PyEnsemble,
        polarization: &str,
        frame_name: &str,
        threshold: f64,
    ) -> PyResult<PyObject> {
        let m = pump::class_membership(&self.0, &natural.0, pol(polarization)?, frame(frame_name)?, threshold)
            .map_err(err)?;
        to_py(py, &m)
    }
}

#[pyclass(name = "Spectrum", module = "remsim")]
#[derive(Clone)]
struct PySpectrum(AbsorptionSpectrum);

#[pymethods]
impl PySpectrum {
    #[new]
    #[pyo3(signature = (detunings, depth, polarization="H"))]
    fn new(detunings: Vec<f64>, depth: Vec<f64>, polarization: &str) -> PyResult<Self> {
        AbsorptionSpectrum::new(detunings, depth, pol(polarization)?)
            .map(PySpectrum)
            .map_err(err)
    }

    #[getter]
    fn detunings(&self) -> Vec<f64> {
        self.0.detunings().to_vec()
    }

    #[getter]
    fn depth(&self) -> Vec<f64> {
        self.0.depth().to_vec()
    }

    #[getter]
    fn polarization(&self) -> String {
        self.0.polarization().to_string()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn mean_over(&self, lo: f64, hi: f64) -> PyResult<f64> {
        self.0.mean_over(lo, hi).map_err(err)
    }

    fn ripple_over(&self, lo: f64, hi: f64) -> PyResult<f64> {
        self.0.ripple_over(lo, hi).map_err(err)
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    /// Splits the spectrum with a static field in V/cm.
    #[pyo3(signature = (field_v_per_cm, coefficients_khz_per_v_cm=(5.69, -5.69)))]
    fn stark_split(&self, field_v_per_cm: f64, coefficients_khz_per_v_cm: (f64, f64)) -> PyResult<Self> {
        let cfg = StarkConfig {
            coefficients_khz_per_v_cm: [coefficients_khz_per_v_cm.0, coefficients_khz_per_v_cm.1],
            ..StarkConfig::default()
        };
        stark::split_spectrum(&self.0, &cfg, field_v_per_cm)
            .map(PySpectrum)
            .map_err(err)
    }
}

/// Comb rendered on the default material grid.
#[pyfunction]
#[pyo3(signature = (spacing_mhz, finesse, peak_depth, bandwidth_mhz, shape="gaussian", background=0.0, polarization="H"))]
fn render_comb(
    spacing_mhz: f64,
    finesse: f64,
    peak_depth: f64,
    bandwidth_mhz: f64,
    shape: &str,
    background: f64,
    polarization: &str,
) -> PyResult<PySpectrum> {
    let tooth_shape = match shape {
        "gaussian" => ToothShape::Gaussian,
        "square" => ToothShape::Square,
        _ => return Err(err(format!("shape must be 'gaussian' or 'square', got {shape:?}"))),
    };
    let spec = CombSpec {
        spacing_mhz,
        finesse,
        peak_depth,
        background,
        bandwidth_mhz,
        center_mhz: 0.0,
        tooth_shape,
    };
    afc::render_comb(&spec, &GridSpec::default(), pol(polarization)?)
        .map(PySpectrum)
        .map_err(err)
}

#[pyclass(name = "Pulse", module = "remsim")]
#[derive(Clone)]
struct PyPulse(echo::Pulse);

#[pymethods]
impl PyPulse {
    #[new]
    #[pyo3(signature = (center_ns=500.0, fwhm_ns=100.0, carrier_mhz=0.0, dt_ns=1.0, window_ns=8000.0))]
    fn new(center_ns: f64, fwhm_ns: f64, carrier_mhz: f64, dt_ns: f64, window_ns: f64) -> PyResult<Self> {
        echo::Pulse::gaussian(TimeGrid { dt_ns, window_ns }, center_ns, fwhm_ns, carrier_mhz)
            .map(PyPulse)
            .map_err(err)
    }

    #[getter]
    fn center_ns(&self) -> f64 {
        self.0.center_ns
    }

    #[getter]
    fn energy(&self) -> f64 {
        self.0.energy()
    }
}

#[pyclass(name = "EchoTrace", module = "remsim")]
struct PyTrace(echo::EchoTrace);

#[pymethods]
impl PyTrace {
    #[getter]
    fn time_ns(&self) -> Vec<f64> {
        self.0.time_ns.clone()
    }

    #[getter]
    fn intensity(&self) -> Vec<f64> {
        self.0.intensity.clone()
    }

    #[getter]
    fn total_efficiency(&self) -> f64 {
        self.0.total_efficiency
    }

    /// (order, start_ns, end_ns, efficiency) per window.
    #[getter]
    fn markers(&self) -> Vec<(u32, f64, f64, f64)> {
        self.0
            .markers
            .iter()
            .map(|m| (m.order, m.start_ns, m.end_ns, m.efficiency))
            .collect()
    }

    fn efficiency(&self, order: u32) -> PyResult<f64> {
        self.0
            .efficiency(order)
            .ok_or_else(|| err(format!("no window for order {order}")))
    }

    fn centroid_ns(&self, order: u32) -> PyResult<f64> {
        self.0
            .centroid_ns(order)
            .ok_or_else(|| err(format!("no window for order {order}")))
    }
}

#[pyfunction]
#[pyo3(signature = (pulse, spectrum, spacing_mhz=2.0, max_order=3))]
fn propagate(pulse: &PyPulse, spectrum: &PySpectrum, spacing_mhz: f64, max_order: u32) -> PyResult<PyTrace> {
    echo::propagate(&pulse.0, &spectrum.0, &EchoWindows::for_comb(spacing_mhz, max_order))
        .map(PyTrace)
        .map_err(err)
}

/// Stark-gated storage recalled at `order`.
#[pyfunction]
#[pyo3(signature = (pulse, spectrum, voltage, duration_ns=85.0, order=2, spacing_mhz=2.0, max_order=3))]
fn smafc_run(
    pulse: &PyPulse,
    spectrum: &PySpectrum,
    voltage: f64,
    duration_ns: f64,
    order: u32,
    spacing_mhz: f64,
    max_order: u32,
) -> PyResult<PyTrace> {
    let gates = echo::recall_gates(&pulse.0, 1e3 / spacing_mhz, order, duration_ns, voltage).map_err(err)?;
    let w = EchoWindows::for_comb(spacing_mhz, max_order);
    echo::smafc_run(&pulse.0, &spectrum.0, &StarkConfig::default(), &gates, order, &w)
        .map(PyTrace)
        .map_err(err)
}

/// Gate voltage that imposes `phase` over `duration_ns` with the default electrodes.
#[pyfunction]
#[pyo3(signature = (phase, duration_ns=85.0))]
fn voltage_for_phase(phase: f64, duration_ns: f64) -> f64 {
    StarkConfig::default().voltage_for_phase(phase, duration_ns)
}

#[pyfunction]
fn gaussian_efficiency(d: f64, finesse: f64, order: u32) -> PyResult<f64> {
    afc::gaussian_efficiency(d, finesse, order).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (d, finesse, order=1, d0=0.0))]
fn square_efficiency(d: f64, finesse: f64, order: u32, d0: f64) -> PyResult<f64> {
    afc::square_efficiency(d, finesse, order, d0).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (orders, efficiencies, d, coupling=None))]
fn fit_finesse(
    py: Python<'_>,
    orders: Vec<u32>,
    efficiencies: Vec<f64>,
    d: f64,
    coupling: Option<f64>,
) -> PyResult<PyObject> {
    if orders.len() != efficiencies.len() {
        return Err(err("orders and efficiencies differ in length"));
    }
    let obs: Vec<EchoObservation> = orders
        .into_iter()
        .zip(efficiencies)
        .map(|(order, efficiency)| EchoObservation { order, efficiency })
        .collect();
    to_py(py, &afc::fit_finesse(&obs, d, coupling).map_err(err)?)
}

/// Fits both group coefficients; without group labels the detuning sign decides.
#[pyfunction]
#[pyo3(signature = (fields_v_per_cm, detunings_khz, groups=None))]
fn fit_stark(
    py: Python<'_>,
    fields_v_per_cm: Vec<f64>,
    detunings_khz: Vec<f64>,
    groups: Option<Vec<u8>>,
) -> PyResult<PyObject> {
    if fields_v_per_cm.len() != detunings_khz.len() || groups.as_ref().is_some_and(|g| g.len() != detunings_khz.len()) {
        return Err(err("input columns differ in length"));
    }
    let points: Vec<StarkPoint> = (0..fields_v_per_cm.len())
        .map(|i| StarkPoint {
            field_v_per_cm: fields_v_per_cm[i],
            detuning_khz: detunings_khz[i],
            group: groups.as_ref().map(|g| g[i]),
        })
        .collect();
    to_py(py, &stark::fit_stark_coefficient(&points).map_err(err)?)
}

#[pyclass(name = "Counts", module = "remsim")]
#[derive(Clone)]
struct PyCounts(TomographyCounts);

#[pymethods]
impl PyCounts {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        TomographyCounts::from_json(text).map(PyCounts).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    fn total(&self) -> u64 {
        self.0.total()
    }

    fn __len__(&self) -> usize {
        self.0.settings.len()
    }
}

/// Tomography counts of a diattenuating channel.
#[pyfunction]
#[pyo3(signature = (eta_h, eta_v, phase=0.0, mu=0.32, trials=100_000, noise_rate=0.0, seed=0))]
fn simulate_counts(
    eta_h: f64,
    eta_v: f64,
    phase: f64,
    mu: f64,
    trials: u64,
    noise_rate: f64,
    seed: u64,
) -> PyResult<PyCounts> {
    let ch = PolarizationChannel::new(eta_h, eta_v, phase).map_err(err)?;
    let cfg = QptConfig {
        mu,
        trials,
        noise_rate,
        seed,
    };
    tomography::simulate_counts(&ch, &cfg).map(PyCounts).map_err(err)
}

/// Noise rate per detector and trial that gives `snr` at mean efficiency `eta`.
#[pyfunction]
fn noise_rate_for_snr(mu: f64, eta: f64, snr: f64) -> PyResult<f64> {
    tomography::noise_rate_for_snr(mu, eta, snr).map_err(err)
}

#[pyclass(name = "Process", module = "remsim")]
#[derive(Clone)]
struct PyProcess(ProcessMatrix);

#[pymethods]
impl PyProcess {
    #[staticmethod]
    fn identity() -> Self {
        PyProcess(ProcessMatrix::identity())
    }

    #[staticmethod]
    #[pyo3(signature = (eta_h, eta_v, phase=0.0))]
    fn from_channel(eta_h: f64, eta_v: f64, phase: f64) -> PyResult<Self> {
        let ch = PolarizationChannel::new(eta_h, eta_v, phase).map_err(err)?;
        Ok(PyProcess(ProcessMatrix::from_channel(&ch)))
    }

    /// Rows of the 4x4 chi matrix in the {I, X, Y, Z} basis.
    #[getter]
    fn chi(&self) -> Vec<Vec<Complex64>> {
        (0..4).map(|r| (0..4).map(|c| self.0.chi[(r, c)]).collect()).collect()
    }

    fn fidelity(&self) -> PyResult<f64> {
        tomography::process_fidelity(&self.0, &ProcessMatrix::identity()).map_err(err)
    }

    fn trace_preservation_error(&self) -> f64 {
        self.0.trace_preservation_error()
    }

    fn min_eigenvalue(&self) -> f64 {
        self.0.min_eigenvalue()
    }
}

#[pyfunction]
fn mle_reconstruct(counts: &PyCounts) -> PyResult<PyProcess> {
    tomography::mle_reconstruct(&counts.0)
        .map(|r| PyProcess(r.process))
        .map_err(err)
}

/// (mean, std) of the identity fidelity over Poisson resamples.
#[pyfunction]
#[pyo3(signature = (counts, resamples=200, seed=0))]
fn monte_carlo_error(py: Python<'_>, counts: &PyCounts, resamples: usize, seed: u64) -> PyResult<(f64, f64)> {
    let c = counts.0.clone();
    let mc = py
        .allow_threads(move || tomography::monte_carlo_error(&c, resamples, seed))
        .map_err(err)?;
    Ok((mc.mean, mc.std_dev))
}

#[pyfunction]
fn classical_bound(mu: f64, eta: f64) -> PyResult<f64> {
    tomography::classical_bound(mu, eta).map_err(err)
}

#[pyfunction]
fn sigma_margin(fidelity: f64, sigma: f64, bound: f64) -> PyResult<f64> {
    tomography::sigma_margin(fidelity, sigma, bound).map_err(err)
}

/// Runs the command line with `args` (without the program name); returns the exit code.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let mut v = vec!["remsim".to_string()];
    v.extend(args);
    py.allow_threads(move || remsim_cli::main_with_args(v))
}

/// Default material as a JSON document.
#[pyfunction]
fn default_material_json() -> String {
    MaterialConfig::default().to_json()
}

#[pymodule]
fn remsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RemsimError", m.py().get_type::<RemsimError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyPulse>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyCounts>()?;
    m.add_class::<PyProcess>()?;
    m.add_function(wrap_pyfunction!(render_comb, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(smafc_run, m)?)?;
    m.add_function(wrap_pyfunction!(voltage_for_phase, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(square_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(fit_finesse, m)?)?;
    m.add_function(wrap_pyfunction!(fit_stark, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_counts, m)?)?;
    m.add_function(wrap_pyfunction!(noise_rate_for_snr, m)?)?;
    m.add_function(wrap_pyfunction!(mle_reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_error, m)?)?;
    m.add_function(wrap_pyfunction!(classical_bound, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_margin, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    m.add_function(wrap_pyfunction!(default_material_json, m)?)?;
    Ok(())
}

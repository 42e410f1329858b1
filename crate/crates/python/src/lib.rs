//! Python bindings for the simulator core.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dicke_core::expcli::{self, Experiment};
use dicke_core::hilbert::{hamiltonian_dicke, CompositeSpace, FockSpace, SpinSpace};
use dicke_core::lindblad::{steady_state, transmission_scan};
use dicke_core::meanfield::{bifurcation_scan, ScanOptions};
use dicke_core::{params, spectrum, units, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. }
        | Error::InvalidConfig(_)
        | Error::OutsideValidity(_)
        | Error::SignMismatch { .. }
        | Error::NegativePower(..)
        | Error::DegenerateDetuning { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Apparatus configuration. Frequencies in rad/us, powers in mW.
#[pyclass(name = "PhysicalConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyPhysicalConfig {
    inner: params::PhysicalConfig,
}

#[pymethods]
impl PyPhysicalConfig {
    /// Reference apparatus with the atom number set by a 0.5 MHz dispersive shift.
    #[staticmethod]
    fn reference() -> Self {
        PyPhysicalConfig {
            inner: params::PhysicalConfig::reference(),
        }
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn n_total(&self) -> u64 {
        self.inner.n_total
    }

    #[setter]
    fn set_n_total(&mut self, n: u64) {
        self.inner.n_total = n;
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[setter]
    fn set_eta(&mut self, v: f64) {
        self.inner.eta = v;
    }

    #[getter]
    fn zeta(&self) -> f64 {
        self.inner.zeta
    }

    #[setter]
    fn set_zeta(&mut self, v: f64) {
        self.inner.zeta = v;
    }

    /// Set both Raman Rabi frequencies from a total power and split.
    fn with_beam_power(&self, c_rabi: f64, p_total: f64, split: f64) -> PyResult<Self> {
        let calib = params::PowerCalibration::new(c_rabi).map_err(to_py)?;
        let inner = self.inner.with_beam_power(&calib, p_total, split).map_err(to_py)?;
        Ok(PyPhysicalConfig { inner })
    }

    fn effective_params(&self) -> PyResult<PyEffectiveParams> {
        Ok(PyEffectiveParams {
            inner: self.inner.effective_params().map_err(to_py)?,
        })
    }

    fn atoms_from_shift(&self, omega_d: f64) -> PyResult<u64> {
        self.inner.atoms_from_shift(omega_d).map_err(to_py)
    }

    fn dispersive_shift(&self, n: u64) -> PyResult<f64> {
        self.inner.dispersive_shift(n).map_err(to_py)
    }

    /// Estimated spontaneous scattering rate, 1/ms.
    fn scattering_rate_estimate(&self) -> PyResult<f64> {
        self.inner.scattering_rate_estimate().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Effective Dicke parameters in rad/us.
#[pyclass(name = "EffectiveParams", skip_from_py_object)]
#[derive(Clone)]
struct PyEffectiveParams {
    inner: params::EffectiveParams,
}

#[pymethods]
impl PyEffectiveParams {
    #[new]
    #[pyo3(signature = (omega, omega0, delta, kappa, lambda_r, lambda_s, n_lambda=1))]
    fn new(omega: f64, omega0: f64, delta: f64, kappa: f64, lambda_r: f64, lambda_s: f64, n_lambda: u64) -> Self {
        PyEffectiveParams {
            inner: params::EffectiveParams {
                omega,
                omega0,
                delta,
                lambda_r,
                lambda_s,
                omega_ds: 0.0,
                delta_r: -1.0,
                delta_s: -1.0,
                n_lambda,
                kappa,
                eta: 0.0,
            },
        }
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }

    #[getter]
    fn omega0(&self) -> f64 {
        self.inner.omega0
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn lambda_r(&self) -> f64 {
        self.inner.lambda_r
    }

    #[getter]
    fn lambda_s(&self) -> f64 {
        self.inner.lambda_s
    }

    #[getter]
    fn n_lambda(&self) -> u64 {
        self.inner.n_lambda
    }

    fn cavity_tc(&self) -> f64 {
        self.inner.cavity_tc()
    }

    fn dicke_coupling(&self) -> f64 {
        self.inner.dicke_coupling()
    }

    fn asymmetry(&self) -> f64 {
        self.inner.asymmetry()
    }

    fn critical_coupling(&self) -> PyResult<f64> {
        self.inner.critical_coupling().map_err(to_py)
    }

    fn with_dicke_coupling(&self, lambda: f64) -> Self {
        PyEffectiveParams {
            inner: self.inner.with_dicke_coupling(lambda),
        }
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyfunction]
fn mhz(f: f64) -> f64 {
    units::mhz(f)
}

#[pyfunction]
fn to_mhz(w: f64) -> f64 {
    units::to_mhz(w)
}

#[pyfunction]
fn critical_coupling(omega0: f64, omega_cav: f64, kappa: f64) -> PyResult<f64> {
    params::critical_coupling(omega0, omega_cav, kappa).map_err(to_py)
}

#[pyfunction]
fn tc_normal_modes(omega_cav: f64, omega0: f64, lambda_r: f64) -> (f64, f64) {
    spectrum::tc_normal_modes(omega_cav, omega0, lambda_r)
}

#[pyfunction]
fn counts_model(photons: Vec<f64>, kappa: f64, efficiency: f64, bin: f64) -> PyResult<Vec<f64>> {
    expcli::counts_model(&photons, kappa, efficiency, bin).map_err(to_py)
}

/// Weak-probe transmission; returns `(delta_p, photons, normalized)` rows.
#[pyfunction(name = "transmission_scan")]
#[pyo3(signature = (eff, grid, eta_p, n_max=12, n_sim=2))]
fn transmission_scan_py(
    py: Python<'_>,
    eff: PyRef<'_, PyEffectiveParams>,
    grid: Vec<f64>,
    eta_p: f64,
    n_max: usize,
    n_sim: u64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let fock = FockSpace::new(n_max).map_err(to_py)?;
    let spin = SpinSpace::new(n_sim).map_err(to_py)?;
    let eff = eff.inner.clone();
    let scan = py
        .detach(|| transmission_scan(&eff, &grid, eta_p, &fock, &spin))
        .map_err(to_py)?;
    Ok(scan.iter().map(|p| (p.delta_p, p.photons, p.normalized)).collect())
}

/// Two-Lorentzian fit; returns `(peak1, peak2, splitting, width)`.
#[pyfunction]
fn splitting_from_scan(scan: Vec<(f64, f64)>, width_seed: f64) -> PyResult<(f64, f64, f64, f64)> {
    let f = spectrum::splitting_from_scan(&scan, width_seed).map_err(to_py)?;
    Ok((f.peak1, f.peak2, f.splitting, f.width))
}

/// Mean-field steady `|a|²` over a coupling grid and the refined threshold.
#[pyfunction(name = "bifurcation_scan")]
fn bifurcation_scan_py(
    py: Python<'_>,
    eff: PyRef<'_, PyEffectiveParams>,
    grid: Vec<f64>,
) -> PyResult<(Vec<(f64, f64)>, Option<f64>)> {
    let eff = eff.inner.clone();
    let scan = py
        .detach(|| bifurcation_scan(&eff, &grid, &ScanOptions::default()))
        .map_err(to_py)?;
    Ok((scan.points.iter().map(|p| (p.lambda, p.abs_a2)).collect(), scan.threshold))
}

/// Stationary photon number of the damped Dicke model.
#[pyfunction]
fn steady_photons(py: Python<'_>, eff: PyRef<'_, PyEffectiveParams>, n_max: usize) -> PyResult<f64> {
    let eff = eff.inner.clone();
    py.detach(|| {
        let fock = FockSpace::new(n_max)?;
        let spin = SpinSpace::new(eff.n_lambda)?;
        let h = hamiltonian_dicke(&eff, &fock, &spin)?;
        let rho = steady_state(&h, eff.kappa)?;
        Ok(rho.expect(&CompositeSpace::new(fock, spin).n)?.re)
    })
    .map_err(to_py)
}

/// Run a CLI experiment; returns `(record_dir, report, failed_check)`.
#[pyfunction]
#[pyo3(signature = (subcommand, out, config=None, overrides=Vec::new(), force=false))]
fn run_experiment(
    py: Python<'_>,
    subcommand: &str,
    out: PathBuf,
    config: Option<PathBuf>,
    overrides: Vec<String>,
    force: bool,
) -> PyResult<(String, String, Option<String>)> {
    let exp = match subcommand {
        "params" => Experiment::Params,
        "splitting-map" => Experiment::SplittingMap,
        "transmission" => Experiment::Transmission,
        "ramp" => Experiment::Ramp,
        "threshold-map" => Experiment::ThresholdMap,
        "quantum-check" => Experiment::QuantumCheck,
        other => return Err(PyValueError::new_err(format!("unknown subcommand {other}"))),
    };
    let (path, outcome) = py
        .detach(|| expcli::run(exp, config.as_deref(), &overrides, &out, force))
        .map_err(to_py)?;
    Ok((path.display().to_string(), outcome.text, outcome.failed_check))
}

#[pymodule]
fn dicke(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPhysicalConfig>()?;
    m.add_class::<PyEffectiveParams>()?;
    m.add_function(wrap_pyfunction!(mhz, m)?)?;
    m.add_function(wrap_pyfunction!(to_mhz, m)?)?;
    m.add_function(wrap_pyfunction!(critical_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(tc_normal_modes, m)?)?;
    m.add_function(wrap_pyfunction!(counts_model, m)?)?;
    m.add_function(wrap_pyfunction!(transmission_scan_py, m)?)?;
    m.add_function(wrap_pyfunction!(splitting_from_scan, m)?)?;
    m.add_function(wrap_pyfunction!(bifurcation_scan_py, m)?)?;
    m.add_function(wrap_pyfunction!(steady_photons, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}

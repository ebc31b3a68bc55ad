//! Python bindings for `rfpe_lab`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rfpe_lab::analysis;
use rfpe_lab::calibration::{self, FringeSample};
use rfpe_lab::device::{self, DeviceModel};
use rfpe_lab::harness::run::run_scenario as run_scenario_file;
use rfpe_lab::ipea::{ipea_run as ipea_run_core, IpeaConfig};
use rfpe_lab::noise::{NoiseConfig, Strategy};
use rfpe_lab::oracle::DeviceOracle;
use rfpe_lab::rfpe::{self as core_rfpe, per_step};
use rfpe_lab::{Error, ExperimentSetting, Outcome, Phase, RfpeConfig};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::Load { .. } | Error::UnknownColumn(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn phase(x: f64) -> PyResult<Phase> {
    Phase::new(x).map_err(py_err)
}

fn outcome(bit: u8) -> PyResult<Outcome> {
    match bit {
        0 => Ok(Outcome::Zero),
        1 => Ok(Outcome::One),
        _ => Err(PyValueError::new_err(format!("outcome must be 0 or 1, got {bit}"))),
    }
}

fn setting(m: u64, theta: f64) -> PyResult<ExperimentSetting> {
    ExperimentSetting::new(m, phase(theta)?).map_err(py_err)
}

fn strategy(name: &str) -> PyResult<Strategy> {
    match name {
        "single_shot" => Ok(Strategy::SingleShot),
        "majority_vote" => Ok(Strategy::MajorityVote),
        s => s
            .strip_prefix("sampled:")
            .and_then(|n| n.parse().ok())
            .map(Strategy::Sampled)
            .ok_or_else(|| PyValueError::new_err(format!("unknown strategy {s:?}; use single_shot, majority_vote or sampled:N"))),
    }
}

fn noise(shots: u64, strategy_name: &str, sigma_phase: f64, t2: Option<f64>) -> PyResult<NoiseConfig> {
    let n = NoiseConfig { sigma_phase, t2, shots, strategy: strategy(strategy_name)?, poissonian: false };
    n.validate().map_err(py_err)?;
    Ok(n)
}

/// Gaussian belief over a phase.
#[pyclass(frozen, skip_from_py_object, module = "rfpe_lab_py")]
#[derive(Clone, Copy)]
struct GaussianBelief {
    inner: core_rfpe::GaussianBelief,
}

#[pymethods]
impl GaussianBelief {
    #[new]
    fn new(mu: f64, sigma: f64) -> PyResult<Self> {
        Ok(Self { inner: core_rfpe::GaussianBelief::new(mu, sigma).map_err(py_err)? })
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu().value()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    fn __repr__(&self) -> String {
        format!("GaussianBelief(mu={}, sigma={})", self.mu(), self.sigma())
    }
}

/// Probability of `outcome` for true phase `phi` at setting `(m, theta)`.
#[pyfunction]
fn likelihood(outcome_bit: u8, phi: f64, m: u64, theta: f64) -> PyResult<f64> {
    Ok(rfpe_lab::likelihood(outcome(outcome_bit)?, phase(phi)?, &setting(m, theta)?))
}

#[pyfunction]
fn wrap_phase(x: f64) -> PyResult<f64> {
    rfpe_lab::wrap_phase(x).map(Phase::value).map_err(py_err)
}

#[pyfunction]
fn circular_distance(a: f64, b: f64) -> PyResult<f64> {
    Ok(rfpe_lab::circular_distance(phase(a)?, phase(b)?))
}

/// One rejection-filtering update.
#[pyfunction]
#[pyo3(signature = (outcome_bit, prior, m, theta, n_particles=1000, seed=0))]
fn rejection_update(outcome_bit: u8, prior: &GaussianBelief, m: u64, theta: f64, n_particles: usize, seed: u64) -> PyResult<GaussianBelief> {
    let cfg = RfpeConfig { n_particles, ..Default::default() };
    cfg.validate().map_err(py_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = core_rfpe::rejection_update(outcome(outcome_bit)?, &prior.inner, &setting(m, theta)?, &cfg, &mut rng).map_err(py_err)?;
    Ok(GaussianBelief { inner })
}

/// Exact Bayes update on a grid, summarized as a Gaussian.
#[pyfunction]
#[pyo3(signature = (outcome_bit, prior, m, theta, n_grid=65536))]
fn grid_posterior(outcome_bit: u8, prior: &GaussianBelief, m: u64, theta: f64, n_grid: usize) -> PyResult<GaussianBelief> {
    let inner = core_rfpe::grid_posterior(outcome(outcome_bit)?, &prior.inner, &setting(m, theta)?, n_grid).map_err(py_err)?;
    Ok(GaussianBelief { inner })
}

/// RFPE against the simulated device; returns `(step, mu, sigma, error)` per step.
#[pyfunction]
#[pyo3(signature = (truth, steps=50, n_particles=1000, shots=2000, strategy="majority_vote", sigma_phase=0.0, t2=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn rfpe_run(
    truth: f64,
    steps: usize,
    n_particles: usize,
    shots: u64,
    strategy: &str,
    sigma_phase: f64,
    t2: Option<f64>,
    seed: u64,
) -> PyResult<Vec<(usize, f64, f64, f64)>> {
    let truth = phase(truth)?;
    let device = DeviceModel::with_eigenphase(truth).map_err(py_err)?;
    let mut oracle = DeviceOracle::seeded(device, noise(shots, strategy, sigma_phase, t2)?, seed).map_err(py_err)?;
    let cfg = RfpeConfig { n_particles, n_steps: steps, t2_cap: t2, rng_seed: seed.wrapping_add(1), ..Default::default() };
    let trace = core_rfpe::rfpe_run(&mut oracle, core_rfpe::GaussianBelief::broad(), &cfg, Some(truth)).map_err(py_err)?;
    Ok(per_step(&trace)
        .into_iter()
        .map(|r| (r.step, r.posterior.mu().value(), r.posterior.sigma(), r.error.unwrap_or(f64::NAN)))
        .collect())
}

/// Iterative phase estimation against the simulated device; returns the estimate.
#[pyfunction]
#[pyo3(signature = (truth, n_bits=16, shots=2000, strategy="majority_vote", sigma_phase=0.0, t2=None, seed=0))]
fn ipea_run(truth: f64, n_bits: u32, shots: u64, strategy: &str, sigma_phase: f64, t2: Option<f64>, seed: u64) -> PyResult<f64> {
    let device = DeviceModel::with_eigenphase(phase(truth)?).map_err(py_err)?;
    let mut oracle = DeviceOracle::seeded(device, noise(shots, strategy, sigma_phase, t2)?, seed).map_err(py_err)?;
    let cfg = IpeaConfig { n_bits, rng_seed: seed.wrapping_add(1), ..Default::default() };
    let (est, _) = ipea_run_core(&mut oracle, &cfg).map_err(py_err)?;
    Ok(est.value())
}

/// Outcome-0 probability of one noisy circuit execution.
#[pyfunction]
#[pyo3(signature = (truth, m, theta, sigma_phase=0.0, seed=0))]
fn simulate_probability(truth: f64, m: u64, theta: f64, sigma_phase: f64, seed: u64) -> PyResult<f64> {
    let device = DeviceModel::with_eigenphase(phase(truth)?).map_err(py_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    device::simulate_probability(&device.instance(setting(m, theta)?), sigma_phase, &mut rng).map_err(py_err)
}

#[pyfunction]
fn chernoff_bound(p: f64, n: u64) -> PyResult<f64> {
    analysis::chernoff_bound(p, n).map_err(py_err)
}

#[pyfunction]
fn exact_minority_tail(p: f64, n: u64) -> f64 {
    analysis::exact_minority_tail(p, n)
}

#[pyfunction]
fn critical_signal(n_bits: u64, n: u64, pe: f64) -> PyResult<f64> {
    analysis::critical_signal(n_bits, n, pe).map_err(py_err)
}

/// Fits `B + A cos(2π(P_el − P_Φ)/T)`; returns a dict of estimates and statistics.
#[pyfunction]
#[pyo3(signature = (p_el, p_op, restarts=16, seed=0))]
fn fit_fringe(py: Python<'_>, p_el: Vec<f64>, p_op: Vec<f64>, restarts: usize, seed: u64) -> PyResult<Py<PyAny>> {
    if p_el.len() != p_op.len() {
        return Err(PyValueError::new_err("p_el and p_op must have the same length"));
    }
    let data: Vec<FringeSample> = p_el.into_iter().zip(p_op).map(|(p_el, p_op)| FringeSample { p_el, p_op }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = calibration::fit_fringe(&data, restarts, &mut rng).map_err(py_err)?;
    let d = pyo3::types::PyDict::new(py);
    for (i, name) in calibration::PARAM_NAMES.iter().enumerate() {
        d.set_item(*name, fit.params()[i])?;
    }
    d.set_item("std_errors", fit.std_errors.to_vec())?;
    d.set_item("t_stats", fit.t_stats.to_vec())?;
    d.set_item("p_values", fit.p_values.to_vec())?;
    d.set_item("r_squared", fit.r_squared)?;
    d.set_item("sse", fit.sse)?;
    Ok(d.into_any().unbind())
}

/// Runs a scenario file and returns its manifest as a JSON string.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None, seed=None, plot=false))]
fn run_scenario(config: PathBuf, out_dir: Option<PathBuf>, seed: Option<u64>, plot: bool) -> PyResult<String> {
    let m = run_scenario_file(&config, out_dir.as_deref(), seed, plot).map_err(py_err)?;
    serde_json::to_string(&m).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn rfpe_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GaussianBelief>()?;
    m.add_function(wrap_pyfunction!(likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(wrap_phase, m)?)?;
    m.add_function(wrap_pyfunction!(circular_distance, m)?)?;
    m.add_function(wrap_pyfunction!(rejection_update, m)?)?;
    m.add_function(wrap_pyfunction!(grid_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(rfpe_run, m)?)?;
    m.add_function(wrap_pyfunction!(ipea_run, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_probability, m)?)?;
    m.add_function(wrap_pyfunction!(chernoff_bound, m)?)?;
    m.add_function(wrap_pyfunction!(exact_minority_tail, m)?)?;
    m.add_function(wrap_pyfunction!(critical_signal, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fringe, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}

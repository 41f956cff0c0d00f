//! Python bindings. Reports come back as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use qmem_core::bounds::{self, CapacityFn};
use qmem_core::exact::{self, StateDistribution};
use qmem_core::meanfield;
use qmem_core::montecarlo::{self, TrajectoryBatch};
use qmem_core::{verify, NoiseKind};

fn err(e: qmem_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn noise(name: &str) -> PyResult<NoiseKind> {
    name.parse().map_err(PyValueError::new_err)
}

#[pyclass(name = "ModelParams", module = "qmem", frozen)]
struct PyModelParams {
    inner: qmem_core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (n, p, alpha, q=0.0, q_period=1, noise="erasure"))]
    fn new(n: usize, p: f64, alpha: f64, q: f64, q_period: usize, noise: &str) -> PyResult<Self> {
        let inner = qmem_core::ModelParams::new(n, p, alpha)
            .and_then(|m| m.with_static_noise(q, q_period))
            .map_err(err)?
            .with_noise(self::noise(noise)?);
        Ok(PyModelParams { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q
    }

    #[getter]
    fn q_period(&self) -> usize {
        self.inner.q_period
    }

    #[getter]
    fn noise(&self) -> String {
        self.inner.noise.to_string()
    }

    /// Corrections per epoch, `floor(n alpha)`.
    fn correction_budget(&self) -> usize {
        self.inner.correction_budget()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        let m = &self.inner;
        format!(
            "ModelParams(n={}, p={}, alpha={}, q={}, q_period={}, noise='{}')",
            m.n, m.p, m.alpha, m.q, m.q_period, m.noise
        )
    }
}

/// Monte Carlo estimate of `P[X_t > n beta]` for `t = 0..=t_max`.
#[pyfunction]
#[pyo3(signature = (params, n_traj, t_max, beta=0.5, seed=0))]
fn simulate(
    py: Python<'_>,
    params: &PyModelParams,
    n_traj: u64,
    t_max: u64,
    beta: f64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let spec = TrajectoryBatch::new(params.inner, n_traj, t_max, seed);
    let threshold = params.inner.n as f64 * beta;
    let mut est = py
        .detach(|| montecarlo::run_batch(&spec, threshold))
        .map_err(err)?;
    let median = est.median_hitting_time();
    est.tau_samples = None;
    let out = to_py(py, &est)?;
    out.bind(py).set_item("median_hitting_time", median)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (params, n_traj, t_max, burn_in=None, seed=0))]
fn steady_fraction(
    py: Python<'_>,
    params: &PyModelParams,
    n_traj: u64,
    t_max: u64,
    burn_in: Option<u64>,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let spec = TrajectoryBatch::new(params.inner, n_traj, t_max, seed);
    let r = py
        .detach(|| match burn_in {
            Some(b) => montecarlo::steady_fraction(&spec, b),
            None => montecarlo::steady_fraction_default(&spec),
        })
        .map_err(err)?;
    to_py(py, &r)
}

/// Exact `P[X_t > n beta]` for `t = 0..=t_max`.
#[pyfunction]
#[pyo3(signature = (params, t_max, beta=0.5))]
fn exact_tail(py: Python<'_>, params: &PyModelParams, t_max: u64, beta: f64) -> PyResult<Vec<f64>> {
    let n = params.inner.n;
    let kernel = exact::build_kernel(&params.inner).map_err(err)?;
    let path = py.detach(|| exact::evolve_path(&kernel, &StateDistribution::initial(n), t_max));
    Ok(path.iter().map(|d| d.tail_prob(n as f64 * beta)).collect())
}

/// Distribution of `X_t` after `steps` epochs from `X_0 = 0`.
#[pyfunction]
fn exact_distribution(py: Python<'_>, params: &PyModelParams, steps: u64) -> Vec<f64> {
    let n = params.inner.n;
    py.detach(|| exact::evolve_direct(&params.inner, &StateDistribution::initial(n), steps).mass)
}

#[pyfunction]
#[pyo3(signature = (params, t_max, beta=0.5))]
fn hitting_time_distribution(
    py: Python<'_>,
    params: &PyModelParams,
    t_max: u64,
    beta: f64,
) -> PyResult<Py<PyAny>> {
    let kernel = exact::build_kernel(&params.inner).map_err(err)?;
    let threshold = params.inner.n as f64 * beta;
    let h = py.detach(|| exact::hitting_time_distribution(&kernel, threshold, t_max));
    to_py(py, &h)
}

/// Violations of the monotonicity of `h_k` for the `m`-step kernel.
#[pyfunction]
#[pyo3(signature = (params, m=1))]
fn check_h_monotone(py: Python<'_>, params: &PyModelParams, m: usize) -> PyResult<Py<PyAny>> {
    let kernel = exact::build_kernel(&params.inner).map_err(err)?;
    to_py(py, &exact::check_h_monotone(&kernel, m))
}

#[pyfunction]
fn mf_iterate(n: f64, p: f64, alpha: f64, delta: f64, k: u64) -> PyResult<f64> {
    meanfield::mf_iterate(n, p, alpha, delta, k).map_err(err)
}

/// `(T, delta)`; `delta` defaults to `(p - alpha/(1 - beta))/2`.
#[pyfunction]
#[pyo3(signature = (p, alpha, beta, delta=None))]
fn epochs_to_cross(p: f64, alpha: f64, beta: f64, delta: Option<f64>) -> PyResult<(u64, f64)> {
    let c = match delta {
        Some(d) => meanfield::epochs_to_cross_with_delta(p, alpha, beta, d),
        None => meanfield::epochs_to_cross(p, alpha, beta),
    }
    .map_err(err)?;
    Ok((c.t, c.delta))
}

#[pyfunction]
fn hitting_prob_lb(py: Python<'_>, n: f64, p: f64, alpha: f64, beta: f64) -> PyResult<Py<PyAny>> {
    to_py(
        py,
        &bounds::hitting_prob_lb(n, p, alpha, beta).map_err(err)?,
    )
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (l, p, alpha, theta, noise="erasure", q=0.0, capacity=None))]
fn overhead_bound(
    py: Python<'_>,
    l: f64,
    p: f64,
    alpha: f64,
    theta: f64,
    noise: &str,
    q: f64,
    capacity: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let kind = self::noise(noise)?;
    let cap = match capacity {
        Some(name) => name.parse().map_err(PyValueError::new_err)?,
        None => CapacityFn::default_for(kind),
    };
    to_py(
        py,
        &bounds::overhead_bound_with(l, p, alpha, q, theta, kind, &cap).map_err(err)?,
    )
}

/// Capacity by name: erasure-exact, depolarizing-hashing or
/// depolarizing-threshold.
#[pyfunction]
fn capacity(name: &str, gamma: f64) -> PyResult<f64> {
    let f: CapacityFn = name.parse().map_err(PyValueError::new_err)?;
    bounds::capacity(&f, gamma).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (kappa, t_g, alpha=None, noise="erasure"))]
fn kappa_surface(
    py: Python<'_>,
    kappa: f64,
    t_g: f64,
    alpha: Option<f64>,
    noise: &str,
) -> PyResult<Py<PyAny>> {
    let s = bounds::kappa_surface(kappa, t_g, self::noise(noise)?).map_err(err)?;
    let out = to_py(py, &s)?;
    if let Some(a) = alpha {
        out.bind(py)
            .set_item("at_alpha", to_py(py, &s.overhead(a).map_err(err)?)?)?;
    }
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (params, q_low, q_high, n_traj, t_max, seed=0))]
fn run_coupled(
    py: Python<'_>,
    params: &PyModelParams,
    q_low: f64,
    q_high: f64,
    n_traj: u64,
    t_max: u64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let r = py
        .detach(|| montecarlo::run_coupled(&params.inner, q_low, q_high, n_traj, t_max, seed))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (params, n_traj, t_probe, seed=0))]
fn uniformity_check(
    py: Python<'_>,
    params: &PyModelParams,
    n_traj: u64,
    t_probe: u64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let spec = TrajectoryBatch::new(params.inner, n_traj, t_probe, seed).with_locations();
    let r = py
        .detach(|| montecarlo::uniformity_check(&spec, t_probe))
        .map_err(err)?;
    to_py(py, &r)
}

/// Runs the built-in cross-check suite.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn run_verify(py: Python<'_>, seed: u64) -> PyResult<Py<PyAny>> {
    let r = py.detach(|| verify::run_default(seed));
    to_py(py, &r)
}

/// Runs the command line with `args` (without the program name) and
/// returns its exit status.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("qmem".to_string()).chain(args).collect();
    py.detach(|| qmem_core::cli::run(argv))
}

#[pymodule]
fn qmem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(steady_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(exact_tail, m)?)?;
    m.add_function(wrap_pyfunction!(exact_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(hitting_time_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(check_h_monotone, m)?)?;
    m.add_function(wrap_pyfunction!(mf_iterate, m)?)?;
    m.add_function(wrap_pyfunction!(epochs_to_cross, m)?)?;
    m.add_function(wrap_pyfunction!(hitting_prob_lb, m)?)?;
    m.add_function(wrap_pyfunction!(overhead_bound, m)?)?;
    m.add_function(wrap_pyfunction!(capacity, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_surface, m)?)?;
    m.add_function(wrap_pyfunction!(run_coupled, m)?)?;
    m.add_function(wrap_pyfunction!(uniformity_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}

//! Python bindings for the `betaflow` estimation library.
//!
//! Matrices cross the boundary as lists of rows; vectors as lists of floats.

use betaflow_core::clime::{solve_clime as clime_solve, ClimeProblem};
use betaflow_core::evaluation::beta_errors as core_beta_errors;
use betaflow_core::huber_lasso::{self, HuberLassoProblem, SolverOptions};
use betaflow_core::pipeline::{self, EstimatorConfig, Method, TuningConstants};
use betaflow_core::preprocessing::{IncrementSet, LogPricePanel};
use betaflow_core::simulator::{simulate_paths, SimConfig};
use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: betaflow_core::Error) -> PyErr {
    match err {
        betaflow_core::Error::InvalidConfig(_) | betaflow_core::Error::InvalidInput(_) | betaflow_core::Error::DimensionMismatch(_) => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

/// Log-price observations `(t, Y, X_1..X_p)` on an equally spaced grid.
#[pyclass(name = "Panel", module = "betaflow", skip_from_py_object)]
#[derive(Clone)]
struct PyPanel {
    inner: LogPricePanel,
}

#[pymethods]
impl PyPanel {
    #[new]
    fn new(t: Vec<f64>, y: Vec<f64>, x: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = LogPricePanel { t, y, x: matrix(&x)? };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        let inner = LogPricePanel::from_csv_path(std::path::Path::new(path)).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        self.inner.write_csv(std::io::BufWriter::new(file)).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.t.clone()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.clone()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.x)
    }

    fn __repr__(&self) -> String {
        format!("Panel(n={}, p={})", self.inner.n(), self.inner.p())
    }
}

/// A simulated panel together with its true integrated betas.
#[pyclass(name = "Simulation", module = "betaflow", get_all)]
struct PySimulation {
    panel: PyPanel,
    true_integrated_beta: Vec<f64>,
    x_jump_count: usize,
    y_jump_count: usize,
}

/// Integrated-beta estimate returned by [`estimate`].
#[pyclass(name = "IntegratedBeta", module = "betaflow")]
struct PyIntegratedBeta {
    inner: pipeline::IntegratedBeta,
}

#[pymethods]
impl PyIntegratedBeta {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.name()
    }

    #[getter]
    fn debiased(&self) -> Vec<f64> {
        self.inner.debiased.to_vec()
    }

    #[getter]
    fn thresholded(&self) -> Vec<f64> {
        self.inner.thresholded.to_vec()
    }

    #[getter]
    fn naive(&self) -> Vec<f64> {
        self.inner.naive.to_vec()
    }

    #[getter]
    fn support(&self) -> Vec<usize> {
        self.inner.support()
    }

    #[getter]
    fn k_n(&self) -> usize {
        self.inner.k_n
    }

    #[getter]
    fn failed_windows(&self) -> usize {
        self.inner.failed_windows()
    }

    /// Constants actually used, including grid-selected ones.
    #[getter]
    fn constants(&self) -> std::collections::BTreeMap<&'static str, f64> {
        let c = &self.inner.constants;
        [("c_tau", c.c_tau), ("c_eta", c.c_eta), ("c_lambda", c.c_lambda), ("c_varpi", c.c_varpi), ("c_h", c.c_h)]
            .into_iter()
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Spot estimate from one Huber-LASSO solve.
#[pyclass(name = "SpotFit", module = "betaflow", get_all)]
struct PySpotFit {
    beta: Vec<f64>,
    objective: f64,
    iterations: usize,
    kkt_gap: f64,
    converged: bool,
}

#[pyfunction]
#[pyo3(signature = (p, n, seed=0, df=2.0, n_all=None))]
fn simulate(p: usize, n: usize, seed: u64, df: f64, n_all: Option<usize>) -> PyResult<PySimulation> {
    let mut config = SimConfig { n, seed, df, ..SimConfig::with_dimension(p) };
    if let Some(n_all) = n_all {
        config.n_all = n_all;
    }
    let out = simulate_paths(&config).map_err(to_py)?;
    Ok(PySimulation {
        panel: PyPanel { inner: out.panel },
        true_integrated_beta: out.true_integrated_beta.to_vec(),
        x_jump_count: out.jumps.x.iter().map(Vec::len).sum(),
        y_jump_count: out.jumps.y.len(),
    })
}

#[pyfunction]
#[pyo3(signature = (panel, method="red", c_tau=None, c_eta=None, c_lambda=None, c_varpi=None, c_h=None, k_n=None))]
#[allow(clippy::too_many_arguments)]
fn estimate(
    py: Python<'_>,
    panel: &PyPanel,
    method: &str,
    c_tau: Option<f64>,
    c_eta: Option<f64>,
    c_lambda: Option<f64>,
    c_varpi: Option<f64>,
    c_h: Option<f64>,
    k_n: Option<usize>,
) -> PyResult<PyIntegratedBeta> {
    let method: Method = method.parse().map_err(to_py)?;
    let mut config = EstimatorConfig::for_method(method);
    config.c_eta = c_eta;
    config.c_lambda = c_lambda;
    config.k_n = k_n;
    if let Some(v) = c_tau {
        config.c_tau = v;
    }
    if let Some(v) = c_varpi {
        config.c_varpi = v;
    }
    if let Some(v) = c_h {
        config.c_h = v;
    }
    let panel = panel.inner.clone();
    let inner = py
        .detach(move || {
            let inc = IncrementSet::from_panel(&panel)?;
            pipeline::run_red_lasso(&inc, &config)
        })
        .map_err(to_py)?;
    Ok(PyIntegratedBeta { inner })
}

#[pyfunction]
fn huber_loss(x: f64, tau: f64) -> PyResult<f64> {
    huber_lasso::huber_loss(x, tau).map_err(to_py)
}

#[pyfunction]
fn huber_grad(x: f64, tau: f64) -> PyResult<f64> {
    huber_lasso::huber_grad(x, tau).map_err(to_py)
}

/// Minimizes `(1/k)Σ l_τ(y_h − x_hᵀβ) + η‖β‖₁`; pass `tau=float("inf")`
/// for the least-squares LASSO.
#[pyfunction]
#[pyo3(signature = (design, response, tau, eta, init=None, tol=1e-7, max_iter=10_000))]
fn solve_huber_lasso(
    design: Vec<Vec<f64>>,
    response: Vec<f64>,
    tau: f64,
    eta: f64,
    init: Option<Vec<f64>>,
    tol: f64,
    max_iter: usize,
) -> PyResult<PySpotFit> {
    let x = matrix(&design)?;
    let y = Array1::from(response);
    let problem = HuberLassoProblem::new(x.view(), y.view(), tau, eta).map_err(to_py)?;
    let init = init.map(Array1::from).unwrap_or_else(|| Array1::zeros(problem.p()));
    let opts = SolverOptions { tol, max_iter, ..SolverOptions::default() };
    let fit = huber_lasso::solve(&problem, &init, &opts).map_err(to_py)?;
    Ok(PySpotFit {
        beta: fit.beta.to_vec(),
        objective: fit.objective,
        iterations: fit.iterations,
        kkt_gap: fit.kkt_gap,
        converged: fit.converged,
    })
}

/// Column-wise CLIME estimate of the inverse of `s` at level `lam`.
#[pyfunction]
#[pyo3(signature = (s, lam, tol=1e-7))]
fn solve_clime(s: Vec<Vec<f64>>, lam: f64, tol: f64) -> PyResult<Vec<Vec<f64>>> {
    let problem = ClimeProblem::new(matrix(&s)?, lam).map_err(to_py)?;
    let est = clime_solve(&problem, tol).map_err(to_py)?;
    Ok(rows(&est.omega))
}

/// `(tau, eta, lambda, varpi, h_n)` for a sample of size `n` and dimension `p`.
#[pyfunction]
#[pyo3(signature = (n, p, c_tau=16.0, c_eta=1.0, c_lambda=1.0, c_varpi=1.0 / 64.0, c_h=0.25))]
fn compute_tuning(
    n: usize,
    p: usize,
    c_tau: f64,
    c_eta: f64,
    c_lambda: f64,
    c_varpi: f64,
    c_h: f64,
) -> PyResult<(f64, f64, f64, f64, f64)> {
    let c = TuningConstants { c_tau, c_eta, c_lambda, c_varpi, c_h };
    let v = pipeline::compute_tuning(n, p, &c).map_err(to_py)?;
    Ok((v.tau, v.eta, v.lambda, v.varpi, v.h_n))
}

/// `(max, l1, l2)` norms of `estimate − truth`.
#[pyfunction]
fn beta_errors(estimate: Vec<f64>, truth: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let e = core_beta_errors(Array1::from(estimate).view(), Array1::from(truth).view()).map_err(to_py)?;
    Ok((e.max, e.l1, e.l2))
}

#[pymodule(name = "betaflow")]
pub fn betaflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PySimulation>()?;
    m.add_class::<PyIntegratedBeta>()?;
    m.add_class::<PySpotFit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(huber_loss, m)?)?;
    m.add_function(wrap_pyfunction!(huber_grad, m)?)?;
    m.add_function(wrap_pyfunction!(solve_huber_lasso, m)?)?;
    m.add_function(wrap_pyfunction!(solve_clime, m)?)?;
    m.add_function(wrap_pyfunction!(compute_tuning, m)?)?;
    m.add_function(wrap_pyfunction!(beta_errors, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

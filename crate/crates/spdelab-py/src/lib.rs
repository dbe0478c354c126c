//! Python bindings: the desk model, the path engine, the pointwise
//! estimators, the sup-inf regularization, the resolvent solver, and the
//! whole experiment runner, with fields and nonlinearities addressed by
//! their catalog spec strings.
//!
//! Build with `cargo build -p spdelab-py --release`; the resulting
//! `libspdelab.so` imports as the `spdelab` module once renamed or
//! symlinked to `spdelab.so` on the Python path (python/smoke_test.py
//! stages this automatically).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spdelab_core::config::ExperimentConfig;
use spdelab_core::engine::{simulate_path, SimConfig};
use spdelab_core::envelope::{ll_regularize as ll_reg, EnvelopeConfig};
use spdelab_core::error::Error;
use spdelab_core::experiments::run_experiment as run_exp;
use spdelab_core::fields::{catalog, parse_field};
use spdelab_core::model::SpectralModel;
use spdelab_core::nonlin::Nonlinearity;
use spdelab_core::semigroup::{bel_d1, bel_d2, estimate_pt, McParams};
use spdelab_core::solvers::{resolvent, QuadratureScheme};

fn pyerr(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Argument(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// The diagonal spectral model (A, R, beta, rho) with its weighted
/// geometry. The default constructor is the 8-mode desk model with
/// q_k = k^-2, beta = 1, rho = 1/2.
#[pyclass(name = "Model")]
#[derive(Clone)]
struct PyModel {
    inner: SpectralModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (n=8, decay=2.0, beta=1.0, rho=0.5, trace_exponent=0.5, noise_scale=1.0))]
    fn new(
        n: usize,
        decay: f64,
        beta: f64,
        rho: f64,
        trace_exponent: f64,
        noise_scale: f64,
    ) -> PyResult<Self> {
        let inner = SpectralModel::power_law(n, decay, beta, rho, trace_exponent, noise_scale)
            .map_err(pyerr)?;
        Ok(PyModel { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn a_eigs(&self) -> Vec<f64> {
        self.inner.a_eigs().to_vec()
    }

    #[getter]
    fn r_eigs(&self) -> Vec<f64> {
        self.inner.r_eigs().to_vec()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho()
    }

    /// Weighted norm |x|_R = |R^-1 x|.
    fn hr_norm(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.hr_norm(&x).map_err(pyerr)
    }

    /// Weighted inner product <x, y>_R.
    fn hr_inner(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.inner.hr_inner(&x, &y).map_err(pyerr)
    }

    /// Derived constants at drift derivative bound m: growth rate w_R,
    /// |R|, the dissipativity budget zeta_R, and the order-2/3 forcing
    /// constants.
    fn constants<'py>(&self, py: Python<'py>, m: f64) -> PyResult<Bound<'py, PyDict>> {
        let c = self.inner.compute_constants(m).map_err(pyerr)?;
        let d = PyDict::new_bound(py);
        d.set_item("w_r", c.w_r)?;
        d.set_item("r_norm", c.r_norm)?;
        d.set_item("lip_const", c.lip_const)?;
        d.set_item("zeta_r", c.zeta_r)?;
        d.set_item("m2", c.m2)?;
        d.set_item("m3", c.m3)?;
        d.set_item("b_growth", c.b_growth)?;
        d.set_item("theta", c.theta)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n={}, beta={}, rho={}, trace_exponent={}, noise_scale={})",
            self.inner.dim(),
            self.inner.beta(),
            self.inner.rho(),
            self.inner.trace_exponent(),
            self.inner.noise_scale()
        )
    }
}

/// Catalog of built-in scalar fields as (spec, class, description) rows.
#[pyfunction(name = "catalog")]
fn py_catalog() -> Vec<(String, String, String)> {
    catalog()
        .into_iter()
        .map(|e| (e.pattern.to_string(), e.class.to_string(), e.what.to_string()))
        .collect()
}

/// Simulate one path of the state and its variational processes on exact
/// Ornstein-Uhlenbeck mode transitions. Returns a dict with the grid,
/// the state path, and (per requested order) the variational paths and
/// integration-by-parts weights. Bit-deterministic in (seed, path_index).
#[pyfunction]
#[pyo3(signature = (model, x, t_end, dt=1e-2, seed=1, nonlin="zero", order=0, h=None, k=None, j=None, path_index=0))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    model: &PyModel,
    x: Vec<f64>,
    t_end: f64,
    dt: f64,
    seed: u64,
    nonlin: &str,
    order: u8,
    h: Option<Vec<f64>>,
    k: Option<Vec<f64>>,
    j: Option<Vec<f64>>,
    path_index: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let g = Nonlinearity::parse(nonlin, model.inner.dim()).map_err(pyerr)?;
    let cfg = SimConfig::plain(dt, t_end, 1, seed).with_directions(order, h, k, j);
    let b = simulate_path(&model.inner, &g, &cfg, &x, path_index).map_err(pyerr)?;
    let d = PyDict::new_bound(py);
    d.set_item("grid", b.grid)?;
    d.set_item("x_path", b.x_path)?;
    d.set_item("delta1", b.delta1)?;
    d.set_item("delta2", b.delta2)?;
    d.set_item("delta3", b.delta3)?;
    d.set_item("weight1", b.weight1)?;
    d.set_item("weight2", b.weight2)?;
    d.set_item("weight3", b.weight3)?;
    Ok(d)
}

fn mc_params(dt: f64, n_outer: u64, n_inner: u64, seed: u64) -> McParams {
    McParams::new(dt, n_outer, n_inner, seed)
}

/// Monte Carlo estimate of the transition-semigroup action P(t)f(x).
/// Returns (value, std_error).
#[pyfunction]
#[pyo3(name = "estimate_pt")]
#[pyo3(signature = (model, field, t, x, dt=1e-2, n_outer=4000, seed=1, nonlin="zero"))]
#[allow(clippy::too_many_arguments)]
fn py_estimate_pt(
    model: &PyModel,
    field: &str,
    t: f64,
    x: Vec<f64>,
    dt: f64,
    n_outer: u64,
    seed: u64,
    nonlin: &str,
) -> PyResult<(f64, f64)> {
    let g = Nonlinearity::parse(nonlin, model.inner.dim()).map_err(pyerr)?;
    let f = parse_field(field, &model.inner).map_err(pyerr)?;
    let est = estimate_pt(&model.inner, &g, &f, t, &x, &mc_params(dt, n_outer, 1, seed))
        .map_err(pyerr)?;
    Ok((est.value, est.std_error))
}

/// First derivative of P(t)f at x along h by integration by parts.
/// Returns (value, std_error).
#[pyfunction]
#[pyo3(name = "bel_d1")]
#[pyo3(signature = (model, field, t, x, h, dt=1e-2, n_outer=4000, seed=1, nonlin="zero"))]
#[allow(clippy::too_many_arguments)]
fn py_bel_d1(
    model: &PyModel,
    field: &str,
    t: f64,
    x: Vec<f64>,
    h: Vec<f64>,
    dt: f64,
    n_outer: u64,
    seed: u64,
    nonlin: &str,
) -> PyResult<(f64, f64)> {
    let g = Nonlinearity::parse(nonlin, model.inner.dim()).map_err(pyerr)?;
    let f = parse_field(field, &model.inner).map_err(pyerr)?;
    let est = bel_d1(&model.inner, &g, &f, t, &x, &h, &mc_params(dt, n_outer, 1, seed))
        .map_err(pyerr)?;
    Ok((est.value, est.std_error))
}

/// Second derivative of P(t)f at x along (h, k) by double integration by
/// parts over the split horizon. Returns (value, std_error).
#[pyfunction]
#[pyo3(name = "bel_d2")]
#[pyo3(signature = (model, field, t, x, h, k, dt=1e-2, n_outer=4000, seed=1, nonlin="zero"))]
#[allow(clippy::too_many_arguments)]
fn py_bel_d2(
    model: &PyModel,
    field: &str,
    t: f64,
    x: Vec<f64>,
    h: Vec<f64>,
    k: Vec<f64>,
    dt: f64,
    n_outer: u64,
    seed: u64,
    nonlin: &str,
) -> PyResult<(f64, f64)> {
    let g = Nonlinearity::parse(nonlin, model.inner.dim()).map_err(pyerr)?;
    let f = parse_field(field, &model.inner).map_err(pyerr)?;
    let est = bel_d2(&model.inner, &g, &f, t, &x, &h, &k, &mc_params(dt, n_outer, 1, seed))
        .map_err(pyerr)?;
    Ok((est.value, est.std_error))
}

/// Sup-inf regularization f_eps(x) over the leading subspace directions.
/// Returns a dict with the value, the optimizing shifts, and whether any
/// optimizer touched its search boundary.
#[pyfunction]
#[pyo3(signature = (model, field, x, epsilon, subspace_dims=2, c_alpha_hint=2.0))]
fn ll_regularize<'py>(
    py: Python<'py>,
    model: &PyModel,
    field: &str,
    x: Vec<f64>,
    epsilon: f64,
    subspace_dims: usize,
    c_alpha_hint: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let f = parse_field(field, &model.inner).map_err(pyerr)?;
    let mut cfg = EnvelopeConfig::for_field(&model.inner, &f, epsilon, c_alpha_hint).map_err(pyerr)?;
    cfg.subspace_dims = subspace_dims;
    let res = ll_reg(&model.inner, &f, &x, &cfg).map_err(pyerr)?;
    let d = PyDict::new_bound(py);
    d.set_item("value", res.value)?;
    d.set_item("h_star", res.h_star)?;
    d.set_item("k_star", res.k_star)?;
    d.set_item("boundary_hit", res.boundary_hit)?;
    Ok(d)
}

/// Laplace-transform resolvent estimate u = R(lambda)f at x, on the
/// graded quadrature with exponentially exact weights. Returns a dict
/// with the estimate, its standard error, the truncation tail bound, and
/// the quadrature mass defect.
#[pyfunction]
#[pyo3(name = "resolvent")]
#[pyo3(signature = (model, field, lam, x, dt=1e-2, n_outer=4000, seed=1, nonlin="zero", n_nodes=12))]
#[allow(clippy::too_many_arguments)]
fn py_resolvent<'py>(
    py: Python<'py>,
    model: &PyModel,
    field: &str,
    lam: f64,
    x: Vec<f64>,
    dt: f64,
    n_outer: u64,
    seed: u64,
    nonlin: &str,
    n_nodes: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let g = Nonlinearity::parse(nonlin, model.inner.dim()).map_err(pyerr)?;
    let f = parse_field(field, &model.inner).map_err(pyerr)?;
    let consts = model.inner.compute_constants(g.m_bound()).map_err(pyerr)?;
    let scheme = QuadratureScheme::for_value(lam, &consts, n_nodes).map_err(pyerr)?;
    let res = resolvent(
        &model.inner,
        &g,
        &f,
        &x,
        &scheme,
        &mc_params(dt, n_outer, 1, seed),
    )
    .map_err(pyerr)?;
    let d = PyDict::new_bound(py);
    d.set_item("value", res.estimate.value)?;
    d.set_item("std_error", res.estimate.std_error)?;
    d.set_item("tail_bound", res.tail_bound)?;
    d.set_item("mass_defect", res.mass_defect)?;
    d.set_item("small_lambda_caveat", res.small_lambda_caveat)?;
    Ok(d)
}

/// Run one configured experiment from a TOML string and return the full
/// result record as a JSON string (same content as results.json).
#[pyfunction]
fn run_experiment(config_toml: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(pyerr)?;
    let rec = run_exp(&cfg).map_err(pyerr)?;
    Ok(rec.render_json())
}

#[pymodule]
fn spdelab(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(py_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(py_estimate_pt, m)?)?;
    m.add_function(wrap_pyfunction!(py_bel_d1, m)?)?;
    m.add_function(wrap_pyfunction!(py_bel_d2, m)?)?;
    m.add_function(wrap_pyfunction!(ll_regularize, m)?)?;
    m.add_function(wrap_pyfunction!(py_resolvent, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}

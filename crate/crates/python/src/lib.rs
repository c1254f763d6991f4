//! Python bindings. Vectors and matrices cross the boundary as lists and
//! lists of rows; reports come back as dicts.

use std::path::PathBuf;

use frugal_splitting::engine::{run_operator, Form, RunOptions, RunReport, SplittingOperator};
use frugal_splitting::experiment::build_method;
use frugal_splitting::heuristics::{self, DEFAULT_HK_BUDGET};
use frugal_splitting::ops::{self, ForwardOracle, ProblemSpec, ResolventOracle};
use frugal_splitting::params::{
    self, assemble, validate_params, CausalPair, NondecreasingVector, ParamsDocument, SplittingParams, Tolerances,
};
use frugal_splitting::presets::MethodName;
use frugal_splitting::problems::{PortfolioInstance, PortfolioProblemConfig, ToyInstance, ToyProblemConfig};
use frugal_splitting::Error;
use ndarray::{Array1, Array2};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(frugal_splitting, SplittingError, PyException);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        other => SplittingError::new_err(other.to_string()),
    }
}

type Rows = Vec<Vec<f64>>;

fn rows(a: &Array2<f64>) -> Rows {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: &Rows, cols: usize) -> PyResult<Array2<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(SplittingError::new_err(format!("every row must have {cols} entries")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| SplittingError::new_err(e.to_string()))
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated-or-not point in the method family.
#[pyclass(name = "SplittingParams", module = "frugal_splitting", frozen)]
struct PySplittingParams {
    inner: SplittingParams,
}

#[pymethods]
impl PySplittingParams {
    /// Builds parameters from `M` (n x (n-1)), optional `P`, optional causal
    /// pair `(H, K, F)`, cocoercivity constants and relaxation.
    #[staticmethod]
    #[pyo3(signature = (m, beta, theta, p=None, h=None, k=None, f=None))]
    fn assemble(
        m: Rows,
        beta: Vec<f64>,
        theta: f64,
        p: Option<Rows>,
        h: Option<Rows>,
        k: Option<Rows>,
        f: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let n = m.len();
        let mm = matrix(&m, n.saturating_sub(1))?;
        let pp = match p {
            Some(p) => {
                let cols = p.first().map_or(0, Vec::len);
                matrix(&p, cols)?
            }
            None => Array2::zeros((n, 0)),
        };
        let causal = match (h, k, f) {
            (Some(h), Some(k), Some(f)) => {
                let nf = NondecreasingVector::new(f, beta.len()).map_err(to_py)?;
                Some(CausalPair::new(matrix(&h, beta.len())?, matrix(&k, n)?, nf).map_err(to_py)?)
            }
            (None, None, None) => None,
            _ => return Err(SplittingError::new_err("H, K and F must be given together")),
        };
        assemble(mm, pp, causal, beta, theta).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Named preset for `n` resolvents and the given cocoercivity constants.
    #[staticmethod]
    #[pyo3(signature = (name, n, beta, seed=0))]
    fn preset(name: &str, n: usize, beta: Vec<f64>, seed: u64) -> PyResult<Self> {
        let problem = placeholder_problem(n, &beta).map_err(to_py)?;
        let name: MethodName = name.parse().map_err(to_py)?;
        let method = build_method(name, &problem, seed).map_err(to_py)?;
        Ok(Self { inner: method.params })
    }

    /// SFB+: complete-graph coupling and optimized `(H, K)` for schedule `f`.
    #[staticmethod]
    #[pyo3(signature = (f, beta, theta=0.9))]
    fn sfb_plus(f: Vec<usize>, beta: Vec<f64>, theta: f64) -> PyResult<Self> {
        let f = NondecreasingVector::new(f, beta.len()).map_err(to_py)?;
        heuristics::sfb_plus_params(&f, &beta, theta)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc = ParamsDocument::from_json(text).map_err(to_py)?;
        doc.to_params().map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        ParamsDocument::from_params(&self.inner)
            .and_then(|d| d.to_json())
            .map_err(to_py)
    }

    /// The four convergence conditions as a dict.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = validate_params(&self.inner, &Tolerances::default());
        let text = serde_json::to_string(&report).map_err(|e| to_py(e.into()))?;
        let out = from_json(py, &text)?;
        out.set_item("passed", report.passed())?;
        Ok(out)
    }

    fn with_theta(&self, theta: f64) -> PyResult<Self> {
        self.inner.with_theta(theta).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }
    #[getter]
    fn m(&self) -> usize {
        self.inner.num_forward()
    }
    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta()
    }
    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.inner.gamma().to_vec()
    }
    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta().to_vec()
    }
    #[getter(F)]
    fn f(&self) -> Vec<usize> {
        self.inner.f().entries().to_vec()
    }
    #[getter(M)]
    fn m_matrix(&self) -> Rows {
        rows(self.inner.m())
    }
    #[getter(S)]
    fn s(&self) -> Rows {
        rows(self.inner.s())
    }
    #[getter(L)]
    fn l(&self) -> Rows {
        rows(self.inner.l())
    }
    #[getter(W)]
    fn w(&self) -> Rows {
        rows(self.inner.w())
    }
    #[getter(H)]
    fn h(&self) -> Rows {
        rows(self.inner.h())
    }
    #[getter(K)]
    fn k(&self) -> Rows {
        rows(self.inner.k())
    }

    fn __repr__(&self) -> String {
        format!(
            "SplittingParams(n={}, m={}, theta={})",
            self.inner.n(),
            self.inner.num_forward(),
            self.inner.theta()
        )
    }
}

/// Identity resolvents and zero forwards carrying the given constants, for
/// building presets without a concrete problem.
fn placeholder_problem(n: usize, beta: &[f64]) -> frugal_splitting::Result<ProblemSpec> {
    let resolvents = (0..n).map(|_| ResolventOracle::identity()).collect();
    let forwards = beta
        .iter()
        .map(|&b| ForwardOracle::new("zero", b, |x| Array1::zeros(x.len())))
        .collect::<frugal_splitting::Result<Vec<_>>>()?;
    ProblemSpec::new(1, resolvents, forwards)
}

#[pyfunction]
fn preset_ids() -> Vec<&'static str> {
    MethodName::ALL.iter().map(|m| m.id()).collect()
}

#[pyfunction]
fn full_laplacian(n: usize) -> Rows {
    rows(&params::full_laplacian(n))
}

#[pyfunction]
fn prox_norm_offset(xi: Vec<f64>, tau: f64, v: Vec<f64>) -> Vec<f64> {
    ops::prox_norm_offset(Array1::from(xi).view(), tau, Array1::from(v).view()).to_vec()
}

#[pyfunction]
fn soft_threshold_offset(x0: Vec<f64>, tau: f64, v: Vec<f64>) -> Vec<f64> {
    ops::soft_threshold_offset(Array1::from(x0).view(), tau, Array1::from(v).view()).to_vec()
}

#[pyfunction]
fn huber_value_grad(delta1: f64, delta2: f64, z: f64) -> PyResult<(f64, f64)> {
    ops::huber_value_grad(delta1, delta2, z).map_err(to_py)
}

#[pyfunction]
fn project_simplex(v: Vec<f64>) -> Vec<f64> {
    ops::project_simplex(Array1::from(v).view()).to_vec()
}

#[pyfunction]
fn project_halfspace(c: Vec<f64>, b: f64, v: Vec<f64>) -> PyResult<Vec<f64>> {
    ops::project_halfspace(Array1::from(c).view(), b, Array1::from(v).view())
        .map(|p| p.to_vec())
        .map_err(to_py)
}

/// Returns `(H, K, objective)`.
#[pyfunction]
#[pyo3(signature = (f, beta, budget=DEFAULT_HK_BUDGET))]
fn optimize_hk(f: Vec<usize>, beta: Vec<f64>, budget: usize) -> PyResult<(Rows, Rows, f64)> {
    let f = NondecreasingVector::new(f, beta.len()).map_err(to_py)?;
    let r = heuristics::optimize_hk(&f, &beta, budget).map_err(to_py)?;
    Ok((rows(&r.h), rows(&r.k), r.objective))
}

fn method_for(method: &Bound<'_, PyAny>, problem: &ProblemSpec, seed: u64) -> PyResult<(SplittingParams, Form)> {
    if let Ok(p) = method.cast::<PySplittingParams>() {
        return Ok((p.get().inner.clone(), Form::Minimal));
    }
    let name: String = method.extract()?;
    let name: MethodName = name.parse().map_err(to_py)?;
    let d = build_method(name, problem, seed).map_err(to_py)?;
    Ok((d.params, d.form))
}

fn run_to_dict<'py>(
    py: Python<'py>,
    params: &SplittingParams,
    form: Form,
    problem: &ProblemSpec,
    iters: usize,
    stop: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let op = SplittingOperator::new(params, problem, form).map_err(to_py)?;
    let opts = RunOptions::new(iters).with_stop(stop).with_relative_stop(0.0);
    let report = py
        .detach(|| run_operator(&op, op.zero_state(), &opts))
        .map_err(to_py)?;
    report_dict(py, &report)
}

fn report_dict<'py>(py: Python<'py>, report: &RunReport) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    let pick = |f: fn(&frugal_splitting::engine::IterationRecord) -> f64| -> Vec<f64> {
        report.records.iter().map(f).collect()
    };
    out.set_item("fp_residual", pick(|r| r.fp_residual))?;
    out.set_item("variance", pick(|r| r.variance))?;
    out.set_item(
        "objective",
        report.records.iter().map(|r| r.objective).collect::<Vec<_>>(),
    )?;
    out.set_item("iterations", report.iterations())?;
    out.set_item("converged", report.termination == frugal_splitting::engine::Termination::Converged)?;
    out.set_item("solution", report.solution.to_vec())?;
    out.set_item("consensus_error", report.consensus_error())?;
    out.set_item("inclusion_residual", report.inclusion_residual())?;
    Ok(out)
}

/// Runs a preset id or a `SplittingParams` on the toy problem.
#[pyfunction]
#[pyo3(signature = (method, n=5, d=20, p=30, m=5, delta1=0.1, delta2=1.0, seed=0, hetero=false, iters=1000, stop=0.0))]
#[allow(clippy::too_many_arguments)]
fn run_toy<'py>(
    py: Python<'py>,
    method: &Bound<'py, PyAny>,
    n: usize,
    d: usize,
    p: usize,
    m: usize,
    delta1: f64,
    delta2: f64,
    seed: u64,
    hetero: bool,
    iters: usize,
    stop: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = ToyProblemConfig { n, d, p, m, delta1, delta2, seed, hetero };
    let inst = ToyInstance::generate(&config).map_err(to_py)?;
    let problem = inst.problem().map_err(to_py)?;
    let (params, form) = method_for(method, &problem, seed)?;
    let out = run_to_dict(py, &params, form, &problem, iters, stop)?;
    out.set_item("beta", inst.beta.clone())?;
    Ok(out)
}

/// Runs a preset id or a `SplittingParams` on the portfolio problem.
#[pyfunction]
#[pyo3(signature = (method, assets=6, days=123, chunks=4, seed=0, data=None, iters=1000, stop=0.0))]
#[allow(clippy::too_many_arguments)]
fn run_portfolio<'py>(
    py: Python<'py>,
    method: &Bound<'py, PyAny>,
    assets: usize,
    days: usize,
    chunks: usize,
    seed: u64,
    data: Option<PathBuf>,
    iters: usize,
    stop: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = PortfolioProblemConfig {
        assets,
        days,
        chunks,
        seed,
        data,
        ..Default::default()
    };
    let inst = PortfolioInstance::generate(&config).map_err(to_py)?;
    let problem = inst.problem().map_err(to_py)?;
    let (params, form) = method_for(method, &problem, seed)?;
    let out = run_to_dict(py, &params, form, &problem, iters, stop)?;
    let x = Array1::from(out.get_item("solution")?.expect("set above").extract::<Vec<f64>>()?);
    out.set_item("infeasibility", inst.infeasibility(&x))?;
    Ok(out)
}

#[pymodule(name = "frugal_splitting")]
fn frugal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySplittingParams>()?;
    m.add("SplittingError", m.py().get_type::<SplittingError>())?;
    m.add_function(wrap_pyfunction!(preset_ids, m)?)?;
    m.add_function(wrap_pyfunction!(full_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(prox_norm_offset, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold_offset, m)?)?;
    m.add_function(wrap_pyfunction!(huber_value_grad, m)?)?;
    m.add_function(wrap_pyfunction!(project_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(project_halfspace, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_hk, m)?)?;
    m.add_function(wrap_pyfunction!(run_toy, m)?)?;
    m.add_function(wrap_pyfunction!(run_portfolio, m)?)?;
    Ok(())
}

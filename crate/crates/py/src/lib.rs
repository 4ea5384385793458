//! Python bindings: graphs, Ising models, exact oracles, excision and spectral checks.

use pyo3::exceptions::{PyIndexError, PyOverflowError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use sparse_ising::decomposition::{excise, observed_delta, verify_near_forest, verify_pseudorandom};
use sparse_ising::diagnostics::{mixing_time_bound, mlsi_upper_estimate, spectral_gap_exact};
use sparse_ising::generate::{gen_er, gen_sbm, random_signing};
use sparse_ising::ising::{run_chains, ExactOracle, IsingModel, Observers, SpinConfig};
use sparse_ising::localization::ControlParams;
use sparse_ising::spectral::{bulk_spectral_check, NonbacktrackingMatrix};
use sparse_ising::{Error, Graph, RngSeed};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::VertexOutOfRange { .. } => PyIndexError::new_err(e.to_string()),
        Error::TooLarge { .. } => PyOverflowError::new_err(e.to_string()),
        Error::Io(_) | Error::Unsupported(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Undirected weighted simple graph.
#[pyclass(name = "Graph", module = "sparse_ising_py")]
#[derive(Clone)]
struct PyGraph {
    inner: Graph,
    labels: Option<Vec<i8>>,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (n, edges))]
    fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: Graph::from_edges(n, edges).map_err(py_err)?,
            labels: None,
        })
    }

    /// Two-community stochastic block model; labels are kept on the graph.
    #[staticmethod]
    #[pyo3(signature = (n, d, lam, seed=0))]
    fn sbm(n: usize, d: f64, lam: f64, seed: u64) -> PyResult<Self> {
        let (g, labels) = gen_sbm(n, d, lam, RngSeed::new(seed)).map_err(py_err)?;
        Ok(Self {
            inner: g,
            labels: Some(labels.as_slice().to_vec()),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, d, seed=0))]
    fn erdos_renyi(n: usize, d: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: gen_er(n, d, RngSeed::new(seed)).map_err(py_err)?,
            labels: None,
        })
    }

    /// Parses the "n m" + "u v w" edge-list text format.
    #[staticmethod]
    fn from_edge_list(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Graph::read_edge_list(text.as_bytes()).map_err(py_err)?,
            labels: None,
        })
    }

    fn to_edge_list(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_edge_list(&mut buf).map_err(py_err)?;
        Ok(String::from_utf8(buf).expect("edge list is ASCII"))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<i8>> {
        self.labels.clone()
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().iter().map(|e| (e.u, e.v, e.weight)).collect()
    }

    fn degree(&self, v: usize) -> PyResult<usize> {
        if v >= self.inner.n() {
            return Err(PyIndexError::new_err(format!("vertex {v} out of range")));
        }
        Ok(self.inner.degree(v))
    }

    fn max_degree(&self) -> usize {
        self.inner.max_degree()
    }

    /// Couplings `β·(±1)`; random signs unless `ferro`.
    #[pyo3(signature = (beta, ferro=false, seed=0))]
    fn couplings(&self, beta: f64, ferro: bool, seed: u64) -> PyResult<Self> {
        let unit = self.inner.map_weights(|_| 1.0).map_err(py_err)?;
        let signed = if ferro { unit } else { random_signing(&unit, RngSeed::new(seed)).map_err(py_err)? };
        let inner = if beta == 0.0 { Graph::empty(signed.n()) } else { signed.scaled(beta).map_err(py_err)? };
        Ok(Self {
            inner,
            labels: self.labels.clone(),
        })
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

/// `μ(x) ∝ exp(½ xᵀJx + ⟨h, x⟩)` on `{−1, +1}ⁿ` with sparse couplings.
#[pyclass(name = "IsingModel", module = "sparse_ising_py")]
struct PyIsingModel {
    inner: IsingModel,
}

#[pymethods]
impl PyIsingModel {
    #[new]
    #[pyo3(signature = (couplings, field=None))]
    fn new(couplings: &PyGraph, field: Option<Vec<f64>>) -> PyResult<Self> {
        let field = field.unwrap_or_else(|| vec![0.0; couplings.inner.n()]);
        Ok(Self {
            inner: IsingModel::sparse(couplings.inner.clone(), field).map_err(py_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn field(&self) -> Vec<f64> {
        self.inner.field().to_vec()
    }

    fn log_weight(&self, spins: Vec<i8>) -> PyResult<f64> {
        self.inner.state(spins.clone()).map_err(py_err)?;
        Ok(self.inner.log_weight(&spins))
    }

    /// Exact log-partition function, means, P(x_i = +1) and covariance (n ≤ 20).
    fn oracle<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let o = ExactOracle::build(&self.inner).map_err(py_err)?;
        let cov = o.covariance();
        let rows: Vec<Vec<f64>> = (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect();
        let d = PyDict::new_bound(py);
        d.set_item("log_z", o.log_z())?;
        d.set_item("mean", o.mean().to_vec())?;
        d.set_item("marginals", o.marginals_plus())?;
        d.set_item("covariance", rows)?;
        d.set_item("min_prob", o.min_prob())?;
        Ok(d)
    }

    /// Spectral gap of single-site heat-bath Glauber dynamics (exact, n ≤ 20).
    fn spectral_gap(&self) -> PyResult<f64> {
        spectral_gap_exact(&self.inner).map_err(py_err)
    }

    /// Upper estimate of the modified log-Sobolev constant and the mixing bound it implies.
    #[pyo3(signature = (probes=16, seed=0, eps=0.25))]
    fn mlsi<'py>(&self, py: Python<'py>, probes: usize, seed: u64, eps: f64) -> PyResult<Bound<'py, PyDict>> {
        let est = mlsi_upper_estimate(&self.inner, probes, RngSeed::new(seed)).map_err(py_err)?;
        let min_prob = ExactOracle::build(&self.inner).map_err(py_err)?.min_prob();
        let d = PyDict::new_bound(py);
        d.set_item("value", est.value)?;
        d.set_item("best_probe", est.best_probe)?;
        d.set_item("mixing_bound", mixing_time_bound(est.value, min_prob, eps))?;
        Ok(d)
    }

    /// Glauber chains from uniform random starts; returns per-chain magnetization traces.
    #[pyo3(signature = (steps, chains=1, stride=1, seed=0))]
    fn sample(&self, steps: u64, chains: usize, stride: u64, seed: u64) -> PyResult<Vec<Vec<(u64, f64)>>> {
        if stride == 0 {
            return Err(PyValueError::new_err("stride must be positive"));
        }
        let root = RngSeed::new(seed);
        let mut rng = root.derive(u64::MAX).rng();
        let inits: Vec<SpinConfig> = (0..chains).map(|_| self.inner.random_state(&mut rng)).collect();
        let obs = Observers {
            stride,
            magnetization: true,
            ..Observers::default()
        };
        Ok(run_chains(&self.inner, inits, steps, root, &obs)
            .into_iter()
            .map(|t| t.observations.iter().map(|o| (o.step, o.magnetization.unwrap_or(f64::NAN))).collect())
            .collect())
    }
}

/// Splits a graph into a bounded-degree bulk and a near-forest part.
#[pyfunction]
#[pyo3(signature = (graph, d, epsilon=0.5))]
fn decompose<'py>(py: Python<'py>, graph: &PyGraph, d: f64, epsilon: f64) -> PyResult<Bound<'py, PyDict>> {
    let ex = excise(&graph.inner, d, epsilon).map_err(py_err)?;
    let nf = verify_near_forest(&ex.near_forest);
    let growth = ex.growth_base();
    let delta = observed_delta(&ex.near_forest, growth);
    let cert = verify_pseudorandom(&ex.near_forest, &ex.boundary, delta, growth);
    let out = PyDict::new_bound(py);
    out.set_item("ell", ex.ell.clone())?;
    out.set_item("bulk_max_degree", ex.bulk.max_degree())?;
    out.set_item("bulk_degree_bound", (1.0 + epsilon) * d)?;
    out.set_item("bulk_edges", ex.bulk.m())?;
    out.set_item("near_forest_edges", ex.near_forest.m())?;
    out.set_item("boundary", ex.boundary.clone())?;
    out.set_item("near_forest_pass", nf.pass)?;
    out.set_item("max_excess", nf.max_excess)?;
    out.set_item("delta_observed", delta)?;
    out.set_item("certificate_valid", cert.is_valid())?;
    out.set_item(
        "bulk",
        Py::new(
            py,
            PyGraph {
                inner: ex.bulk,
                labels: None,
            },
        )?,
    )?;
    Ok(out)
}

/// Norm of the signed bulk against `2√((1+ε)d)`.
#[pyfunction]
#[pyo3(signature = (bulk, d, epsilon=0.5, slack=1.2))]
fn bulk_norm<'py>(py: Python<'py>, bulk: &PyGraph, d: f64, epsilon: f64, slack: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = bulk_spectral_check(&bulk.inner, d, epsilon, slack).map_err(py_err)?;
    let out = PyDict::new_bound(py);
    out.set_item("norm", r.norm)?;
    out.set_item("bound", r.bound)?;
    out.set_item("pass", r.pass)?;
    out.set_item("converged", r.converged)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (graph, tol=1e-8, max_iter=5000))]
fn nonbacktracking_radius(graph: &PyGraph, tol: f64, max_iter: usize) -> f64 {
    NonbacktrackingMatrix::new(&graph.inner).spectral_radius(tol, max_iter).value
}

/// Derived quantities of the annealing-path control: `(gamma, D, rho, condition_holds)`.
#[pyfunction]
fn control_params(d: f64, epsilon: f64, beta: f64) -> PyResult<(f64, f64, f64, bool)> {
    if !(d > 0.0 && epsilon > 0.0 && beta >= 0.0) {
        return Err(PyValueError::new_err("need d > 0, ε > 0, β ≥ 0"));
    }
    let p = ControlParams::new(d, epsilon, beta);
    Ok((p.gamma, p.big_d, p.rho(), p.condition_holds()))
}

#[pymodule]
fn sparse_ising_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyIsingModel>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(bulk_norm, m)?)?;
    m.add_function(wrap_pyfunction!(nonbacktracking_radius, m)?)?;
    m.add_function(wrap_pyfunction!(control_params, m)?)?;
    Ok(())
}

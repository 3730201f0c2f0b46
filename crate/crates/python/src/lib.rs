//! Python bindings: instance generation, relaxation solves, exactness
//! certificates and sweeps.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qap_sdr::certificate::{
    check_exactness_condition, construct_certificate_sdr1, construct_certificate_sdr2,
    cost_in_identity_frame, default_t, sdr2_window, verify_kkt_sdr1, verify_kkt_sdr2, KktReport,
};
use qap_sdr::formulation::{correlation, is_exact, round_to_permutation, CostVariant, SdrVariant};
use qap_sdr::harness::{aggregate, run_sweep, solve_instance, to_csv_string, SweepConfig};
use qap_sdr::instance::{
    brute_force_qap, generate, linear_profile, ModelKind, ModelMeta, QapInstance,
};
use qap_sdr::solver::SolverSettings;
use qap_sdr::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::SizeLimit { .. } | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<ModelKind> {
    match kind {
        "diag_gaussian" => Ok(ModelKind::DiagGaussian),
        "diag_plus_wigner" => Ok(ModelKind::DiagPlusWigner),
        "correlated_wigner" => Ok(ModelKind::CorrelatedWigner),
        other => Err(PyValueError::new_err(format!(
            "unknown model kind `{other}`"
        ))),
    }
}

fn parse_sdr(sdr: &str) -> PyResult<SdrVariant> {
    match sdr {
        "I" | "1" | "sdr1" => Ok(SdrVariant::I),
        "II" | "2" | "sdr2" => Ok(SdrVariant::II),
        other => Err(PyValueError::new_err(format!(
            "unknown relaxation `{other}`"
        ))),
    }
}

fn parse_cost(cost: &str) -> PyResult<CostVariant> {
    match cost {
        "squared_difference" => Ok(CostVariant::SquaredDifference),
        "negated_kron" => Ok(CostVariant::NegatedKron),
        other => Err(PyValueError::new_err(format!(
            "unknown cost variant `{other}`"
        ))),
    }
}

fn rows(m: &qap_sdr::linalg::SymMatrix) -> Vec<Vec<f64>> {
    (0..m.n())
        .map(|i| (0..m.n()).map(|j| m.get(i, j)).collect())
        .collect()
}

/// A QAP instance `(A, C)` with an optional planted permutation.
#[pyclass(name = "Instance", module = "qap_sdr_py", skip_from_py_object)]
struct PyInstance {
    inner: QapInstance,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    #[pyo3(signature = (kind, n, sigma, seed, lambda_profile=None))]
    fn generate(
        kind: &str,
        n: usize,
        sigma: f64,
        seed: u64,
        lambda_profile: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let kind = parse_kind(kind)?;
        let lambda_profile = match kind {
            ModelKind::CorrelatedWigner => None,
            _ => Some(lambda_profile.unwrap_or_else(|| linear_profile(n))),
        };
        let meta = ModelMeta {
            kind,
            sigma,
            seed,
            lambda_profile,
            diag_variance: None,
        };
        Ok(Self {
            inner: generate(&meta, n).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: qap_sdr::io::instance_from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        qap_sdr::io::instance_to_json(&self.inner).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.a)
    }

    #[getter]
    fn c(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.c)
    }

    /// Noise in the frame of `A`.
    #[getter]
    fn delta(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.delta())
    }

    #[getter]
    fn truth(&self) -> Option<Vec<usize>> {
        self.inner.truth.as_ref().map(|p| p.as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(n={}, kind={:?}, sigma={}, seed={})",
            self.inner.n, self.inner.model.kind, self.inner.model.sigma, self.inner.model.seed
        )
    }
}

#[pyclass(name = "SolveResult", module = "qap_sdr_py", get_all)]
struct PySolveResult {
    status: String,
    iterations: usize,
    objective: f64,
    primal_residual: f64,
    dual_residual: f64,
    wall_time: f64,
    corr: Option<f64>,
    exact: Option<bool>,
    rounded: Vec<usize>,
    /// Lifted solution, `n^2 x n^2` (or `(n^2+1)` squared for the bordered relaxation).
    x_hat: Vec<Vec<f64>>,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(status={}, iterations={}, corr={:?})",
            self.status, self.iterations, self.corr
        )
    }
}

#[pyfunction]
#[pyo3(signature = (instance, sdr="I", cost="squared_difference", max_iters=None, tol=None))]
fn solve(
    py: Python<'_>,
    instance: &PyInstance,
    sdr: &str,
    cost: &str,
    max_iters: Option<usize>,
    tol: Option<f64>,
) -> PyResult<PySolveResult> {
    let (sdr, cost) = (parse_sdr(sdr)?, parse_cost(cost)?);
    let mut settings = SolverSettings::default();
    if let Some(m) = max_iters {
        settings.max_iters = m;
    }
    if let Some(t) = tol {
        settings.tol_primal = t;
        settings.tol_dual = t;
    }
    settings.validate().map_err(to_py)?;
    let inst = &instance.inner;
    let result = py
        .detach(|| solve_instance(inst, sdr, cost, &settings, None))
        .map_err(to_py)?;
    let corr = match &inst.truth {
        Some(t) => Some(correlation(&result.x_hat, t).map_err(to_py)?),
        None => None,
    };
    let rounded = round_to_permutation(&result.x_hat).map_err(to_py)?;
    Ok(PySolveResult {
        status: result.status.as_str().to_string(),
        iterations: result.iterations,
        objective: result.objective,
        primal_residual: result.primal_residual,
        dual_residual: result.dual_residual,
        wall_time: result.wall_time,
        corr,
        exact: corr.map(is_exact),
        rounded: rounded.as_slice().to_vec(),
        x_hat: rows(&result.x_hat),
    })
}

/// Both sides of the deterministic exactness condition.
#[pyfunction]
fn check_condition<'py>(py: Python<'py>, instance: &PyInstance) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    let r = check_exactness_condition(&inst.a, &inst.delta()).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("lhs", r.lhs)?;
    d.set_item("rhs", r.rhs)?;
    d.set_item("holds", r.holds)?;
    d.set_item("margin", r.margin)?;
    d.set_item("lambda2_bound", r.bound_margin)?;
    d.set_item("eigenvalues", r.spectrum.eigenvalues.clone())?;
    Ok(d)
}

fn kkt_dict<'py>(py: Python<'py>, k: &KktReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("variant", k.variant.to_string())?;
    d.set_item("b_nonneg_min", k.b_nonneg_min)?;
    d.set_item("b_support_violation", k.b_support_violation)?;
    d.set_item("q_kernel_residual", k.q_kernel_residual)?;
    d.set_item("lambda2_Q", k.lambda2_q)?;
    d.set_item("q_min_eigenvalue", k.q_min_eigenvalue)?;
    d.set_item("passes", k.passes)?;
    Ok(d)
}

/// Builds and verifies the dual certificates of both relaxations. The
/// bordered certificate is `None` when the positivity window is empty.
#[pyfunction]
#[pyo3(signature = (instance, t=None, t_prime=None))]
fn certify<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    t: Option<f64>,
    t_prime: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    let (a, delta) = (inst.a.clone(), inst.delta());
    let t = match t {
        Some(t) => t,
        None => default_t(&a).map_err(to_py)?,
    };
    let m = cost_in_identity_frame(&a, &delta).map_err(to_py)?;
    let cert1 = construct_certificate_sdr1(&a, &delta, t).map_err(to_py)?;
    let k1 = verify_kkt_sdr1(&cert1, &m).map_err(to_py)?;
    let tp = match t_prime {
        Some(v) => v,
        None => sdr2_window(&a, &delta, t).map_err(to_py)? / 4.0,
    };
    let d = PyDict::new(py);
    d.set_item("t", t)?;
    d.set_item("sdr1", kkt_dict(py, &k1)?)?;
    match construct_certificate_sdr2(&a, &delta, t, tp) {
        Ok(c2) => {
            let k2 = verify_kkt_sdr2(&c2, &m).map_err(to_py)?;
            d.set_item("sdr2", kkt_dict(py, &k2)?)?;
        }
        Err(Error::WindowViolation { .. }) => d.set_item("sdr2", py.None())?,
        Err(e) => return Err(to_py(e)),
    }
    Ok(d)
}

/// Exhaustive optimum `(permutation, objective)` for `n <= 8`.
#[pyfunction]
fn brute_force(instance: &PyInstance) -> PyResult<(Vec<usize>, f64)> {
    let (p, v) = brute_force_qap(&instance.inner.a, &instance.inner.c).map_err(to_py)?;
    Ok((p.as_slice().to_vec(), v))
}

/// `(sigma, rate, mean_corr)`.
type SummaryRow = (f64, f64, f64);

/// Runs a sweep described by SweepConfig JSON and returns `(csv, summary)`,
/// where `summary` holds one `(sigma, rate, mean_corr)` tuple per sigma.
#[pyfunction]
fn sweep(py: Python<'_>, config_json: &str) -> PyResult<(String, Vec<SummaryRow>)> {
    let cfg = SweepConfig::from_json(config_json).map_err(to_py)?;
    let records = py.detach(|| run_sweep(&cfg)).map_err(to_py)?;
    let csv = to_csv_string(&records).map_err(to_py)?;
    let summary = aggregate(&records)
        .into_iter()
        .map(|s| (s.sigma, s.rate, s.mean_corr))
        .collect();
    Ok((csv, summary))
}

#[pymodule]
pub fn qap_sdr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(check_condition, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add("EXACT_THRESHOLD", qap_sdr::formulation::EXACT_THRESHOLD)?;
    Ok(())
}

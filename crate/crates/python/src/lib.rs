//! Python bindings. Every call goes through the command-line configuration
//! path, so a Python report is byte-for-byte the report the `coopia` binary
//! writes for the same arguments.

use pyo3::exceptions::{PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use coopia::cli::{execute_with_workers, parse_config, ConfigError};
use coopia::params::{rational_string, SchemeParams as CoreParams};
use coopia::Error;

fn to_py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        3 => PyMemoryError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn decimal_int<'py>(py: Python<'py>, digits: String) -> PyResult<Bound<'py, PyAny>> {
    py.import("builtins")?.getattr("int")?.call1((digits,))
}

/// Runs a command given as CLI arguments (without the program name) and
/// returns the report as a dict. Reports of `dof-table --format csv` are
/// returned as a string.
#[pyfunction]
#[pyo3(signature = (args, workers=None))]
fn run(py: Python<'_>, args: Vec<String>, workers: Option<usize>) -> PyResult<Py<PyAny>> {
    let mut argv = vec!["coopia".to_string()];
    argv.extend(args);
    if let Some(w) = workers {
        argv.extend(["--workers".to_string(), w.to_string()]);
    }
    let cfg = parse_config(argv).map_err(|e| match e {
        ConfigError::Usage(e) => PyValueError::new_err(e.to_string()),
        ConfigError::Invalid(e) => to_py_err(e),
    })?;
    let report = py.detach(|| execute_with_workers(&cfg)).map_err(to_py_err)?;
    let text = report.render();
    if report.csv.is_some() {
        return Ok(text.into_pyobject(py)?.into_any().unbind());
    }
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn scheme_args(users: usize, order: usize, n: u64) -> Vec<String> {
    vec![
        "--K".into(),
        users.to_string(),
        "--M".into(),
        order.to_string(),
        "--n".into(),
        n.to_string(),
    ]
}

fn command(name: &str, users: usize, order: usize, n: u64, extra: &[(&str, String)]) -> Vec<String> {
    let mut v = vec![name.to_string()];
    v.extend(scheme_args(users, order, n));
    for (flag, value) in extra {
        v.push(format!("--{flag}"));
        if !value.is_empty() {
            v.push(value.clone());
        }
    }
    v
}

#[pyfunction]
#[pyo3(signature = (users, order, n=1, seed=0, trials=1, ring="primefield", extension=None))]
fn verify_sia(
    py: Python<'_>,
    users: usize,
    order: usize,
    n: u64,
    seed: u64,
    trials: usize,
    ring: &str,
    extension: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let mut extra = vec![("seed", seed.to_string()), ("trials", trials.to_string()), ("ring", ring.into())];
    if let Some(l) = extension {
        extra.push(("lambda", l.to_string()));
    }
    run(py, command("verify-sia", users, order, n, &extra), None)
}

#[pyfunction]
#[pyo3(signature = (users, order, n=1, seed=0, trials=1, ablate=None))]
fn verify_alignment(
    py: Python<'_>,
    users: usize,
    order: usize,
    n: u64,
    seed: u64,
    trials: usize,
    ablate: Option<(usize, usize)>,
) -> PyResult<Py<PyAny>> {
    let mut extra = vec![("seed", seed.to_string()), ("trials", trials.to_string())];
    if let Some((stream, slot)) = ablate {
        extra.push(("ablate-stream", stream.to_string()));
        extra.push(("ablate", slot.to_string()));
    }
    run(py, command("verify-alignment", users, order, n, &extra), None)
}

#[pyfunction]
#[pyo3(signature = (users, order, n=1, seed=0, trials=1, ring="primefield", full_matrix=false, identity_channels=false))]
#[allow(clippy::too_many_arguments)]
fn verify_rank(
    py: Python<'_>,
    users: usize,
    order: usize,
    n: u64,
    seed: u64,
    trials: usize,
    ring: &str,
    full_matrix: bool,
    identity_channels: bool,
) -> PyResult<Py<PyAny>> {
    let mut extra = vec![("seed", seed.to_string()), ("trials", trials.to_string()), ("ring", ring.into())];
    if full_matrix {
        extra.push(("full-matrix", String::new()));
    }
    if identity_channels {
        extra.push(("identity-channels", String::new()));
    }
    run(py, command("verify-rank", users, order, n, &extra), None)
}

#[pyfunction]
#[pyo3(signature = (users, order, n_max=10))]
fn dof_table(py: Python<'_>, users: usize, order: usize, n_max: u64) -> PyResult<Py<PyAny>> {
    let args = vec![
        "dof-table".into(),
        "--K".into(),
        users.to_string(),
        "--M".into(),
        order.to_string(),
        "--n-max".into(),
        n_max.to_string(),
    ];
    run(py, args, None)
}

#[pyfunction]
#[pyo3(signature = (users, order, n=1, seed=0, snr_db=None, ring="complex", realizations=20))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    users: usize,
    order: usize,
    n: u64,
    seed: u64,
    snr_db: Option<Vec<f64>>,
    ring: &str,
    realizations: usize,
) -> PyResult<Py<PyAny>> {
    let mut extra = vec![
        ("seed", seed.to_string()),
        ("ring", ring.into()),
        ("realizations", realizations.to_string()),
    ];
    if let Some(snr) = snr_db {
        let list: Vec<String> = snr.iter().map(|x| x.to_string()).collect();
        extra.push(("snr-db", list.join(",")));
    }
    run(py, command("simulate", users, order, n, &extra), None)
}

/// Extension lengths and DoF of one configuration.
#[pyclass(frozen, name = "SchemeParams")]
struct PySchemeParams {
    inner: CoreParams,
}

#[pymethods]
impl PySchemeParams {
    #[new]
    #[pyo3(signature = (users, order, n=1))]
    fn new(users: usize, order: usize, n: u64) -> PyResult<Self> {
        CoreParams::new(users, order, n)
            .map(|inner| PySchemeParams { inner })
            .map_err(to_py_err)
    }

    #[getter]
    fn users(&self) -> usize {
        self.inner.users()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn n(&self) -> u64 {
        self.inner.n()
    }

    #[getter]
    fn l(&self) -> u32 {
        self.inner.l()
    }

    #[getter]
    fn mu_n<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        decimal_int(py, self.inner.mu_n().to_string())
    }

    #[getter]
    fn mu_n1<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        decimal_int(py, self.inner.mu_n1().to_string())
    }

    #[getter]
    fn lambda_n<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        decimal_int(py, self.inner.lambda_n().to_string())
    }

    #[getter]
    fn homogenization_degree(&self) -> u64 {
        self.inner.homogenization_degree()
    }

    /// Total DoF as a `fractions.Fraction`.
    fn total_dof<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        py.import("fractions")?
            .getattr("Fraction")?
            .call1((rational_string(&self.inner.total_dof()),))
    }

    fn dof_limit<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        py.import("fractions")?
            .getattr("Fraction")?
            .call1((rational_string(&self.inner.dof_limit()),))
    }

    fn __repr__(&self) -> String {
        format!(
            "SchemeParams(users={}, order={}, n={}, lambda_n={})",
            self.inner.users(),
            self.inner.order(),
            self.inner.n(),
            self.inner.lambda_n()
        )
    }
}

#[pymodule]
fn pycoopia(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", coopia::cli::VERSION)?;
    m.add_class::<PySchemeParams>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify_sia, m)?)?;
    m.add_function(wrap_pyfunction!(verify_alignment, m)?)?;
    m.add_function(wrap_pyfunction!(verify_rank, m)?)?;
    m.add_function(wrap_pyfunction!(dof_table, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
